"""Flat ``key = value`` pipeline configuration.

Every key has a default; unknown keys are rejected. The config hash covers
every key except I/O locations and is written into each output file.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass

from .errors import InvalidConfig
from .kernel_embed import KernelParams
from .pla import PlaConfig
from .ptr import PtrConfig
from .simgen import PlantedCause, SimConfig
from .trajectory import TIME_UNITS, T0Policy


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(kind):
    def parse(text):
        text = text.strip()
        return tuple(kind(v.strip()) for v in text.split(",") if v.strip()) if text else ()
    return parse


def _planted(text):
    causes = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        tool, thresh, effect = part.split(":")
        causes.append(PlantedCause(int(tool), float(thresh), float(effect)))
    return tuple(causes)


def _fmt_planted(causes):
    return ";".join(f"{c.tool_id}:{c.wait_threshold_h!r}:{c.effect!r}" for c in causes)


# key -> (default text, parser, description); order is the documented order
KEYS = {
    "data_dir": ("", str, "directory holding input CSVs; empty means the --out directory"),
    "seed": ("42", int, "root seed; sim/init/folds streams are derived from it"),
    "attribute_order": ("eqp,recipe,tool_type,photo_layer,route", _list(str), "attributes joined into a token"),
    "separator": ("|", str, "single character between attribute values"),
    "kernel.p": ("3", int, "maximum subsequence length"),
    "kernel.decay": ("0.5", float, "gap decay in (0, 1)"),
    "kernel.normalize": ("true", _bool, "scale the kernel matrix to unit diagonal"),
    "kernel.char_level": ("true", _bool, "characters (true) or attribute fields (false) as symbols"),
    "kernel.all_lengths": ("true", _bool, "sum subsequence lengths 1..p rather than p alone"),
    "embed.dim": ("16", int, "embedding dimension D"),
    "time.t0_policy": ("offset:1.0", str, "t_0 = t_1 - offset (hours) or 'zero'"),
    "time.unit": ("hours", str, "unit of dt inside log10(1 + dt): hours, minutes or days"),
    "time.clamp_tolerance_h": ("0.0", float, "backwards time steps up to this size are clamped, larger ones rejected"),
    "ptr.eta": ("1e-4", float, "l1 strength"),
    "ptr.eta_grid": ("1e-4,1e-3,1e-2", _list(float), "evaluate picks eta from this grid by inner CV (empty: use ptr.eta)"),
    "ptr.hidden": ("", _list(int), "hidden widths of f; empty = affine"),
    "ptr.lr": ("0.01", float, "Adam learning rate"),
    "ptr.epochs": ("3000", int, "full-batch epochs"),
    "pla.mu": ("0.01", float, "reward weight on the mean of F over each route"),
    "pla.mu_td": ("0.1", float, "weight of the squared-increment penalty"),
    "pla.mu_td_grid": ("", _list(float), "evaluate picks mu_td from this grid by inner CV (empty: use pla.mu_td)"),
    "pla.hidden": ("32,32", _list(int), "hidden widths of G"),
    "pla.output_activation": ("softplus", str, "softplus or relu"),
    "pla.input_transform": ("diff", str, "G reads (z, z' - z) ['diff'] or (z, z') ['raw']"),
    "pla.context_init": ("zero", str, "initial first-layer weights on z: zero or glorot"),
    "pla.output_init": ("zero", str, "initial last-layer weights of G: zero (G starts constant) or glorot"),
    "pla.lr": ("1e-3", float, "Adam learning rate"),
    "pla.epochs": ("300", int, "training epochs"),
    "pla.batch_wafers": ("0", int, "wafers per minibatch; 0 = full batch"),
    "cv.folds": ("5", int, "outer folds in evaluate"),
    "cv.inner_folds": ("3", int, "inner folds for hyperparameter grids"),
    "attribute.top_k": ("5", int, "k for top-k recall of planted steps"),
    "report.svg": ("true", _bool, "write one cumulative-curve SVG per wafer"),
    "report.figures": ("true", _bool, "write matplotlib summary figures"),
    "sim.n_wafers": ("787", int, "number of wafers"),
    "sim.length_min": ("50", int, "shortest route"),
    "sim.length_max": ("200", int, "longest route"),
    "sim.n_tools": ("32", int, "tool catalog size"),
    "sim.recipes_per_tool": ("2", int, "recipe variants per tool"),
    "sim.n_routes": ("2", int, "route families"),
    "sim.wait_log_mu": (repr(SimConfig.wait_log_mu), float, "log-normal mean of log wait (hours)"),
    "sim.wait_log_sigma": (repr(SimConfig.wait_log_sigma), float, "log-normal sigma of wait"),
    "sim.planted": (_fmt_planted(SimConfig.planted_causes), _planted, "tool:threshold_h:effect;..."),
    "sim.anomaly_rate": (repr(SimConfig.anomaly_rate), float, "chance a planted-tool visit waits from the tail"),
    "sim.anomaly_log_mu": (repr(SimConfig.anomaly_log_mu), float, "log-normal mean of tail waits"),
    "sim.anomaly_log_sigma": (repr(SimConfig.anomaly_log_sigma), float, "log-normal sigma of tail waits"),
    "sim.smooth_coef": (repr(SimConfig.smooth_coef), float, "per-step contribution per unit log10(1 + wait)"),
    "sim.base": (repr(SimConfig.base), float, "outcome level before any step"),
    "sim.noise_sigma": (repr(SimConfig.noise_sigma), float, "Gaussian outcome noise"),
    "sim.first_wait_h": (repr(SimConfig.first_wait_h), float, "wait charged to the first step"),
    "sim.signed": ("false", _bool, "draw signed per-tool smooth coefficients"),
}

UNHASHED = {"data_dir", "report.svg", "report.figures"}


@dataclass
class PipelineConfig:
    values: dict
    raw: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def hash(self):
        body = {k: self.raw[k] for k in sorted(self.raw) if k not in UNHASHED}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def substream(self, name):
        digest = hashlib.sha256(f"{self.values['seed']}:{name}".encode()).digest()
        return int.from_bytes(digest[:4], "little")

    def kernel_params(self):
        return KernelParams(self["kernel.p"], self["kernel.decay"], self["kernel.char_level"],
                            self["kernel.all_lengths"], self["separator"])

    def t0_policy(self):
        return T0Policy.parse(self["time.t0_policy"])

    def time_scale(self):
        return TIME_UNITS[self["time.unit"]]

    def ptr_config(self, eta=None):
        return PtrConfig(self["ptr.eta"] if eta is None else eta, self["ptr.hidden"], self["ptr.lr"],
                         self["ptr.epochs"], self.substream("init:ptr"))

    def pla_config(self, mu_td=None):
        return PlaConfig(
            mu=self["pla.mu"],
            mu_td=self["pla.mu_td"] if mu_td is None else mu_td,
            hidden=self["pla.hidden"],
            output_activation=self["pla.output_activation"],
            input_transform=self["pla.input_transform"],
            context_init=self["pla.context_init"],
            output_init=self["pla.output_init"],
            lr=self["pla.lr"],
            epochs=self["pla.epochs"],
            batch_wafers=self["pla.batch_wafers"],
            seed=self.substream("init:pla"),
        )

    def sim_config(self):
        return SimConfig(
            n_wafers=self["sim.n_wafers"],
            route_length_range=(self["sim.length_min"], self["sim.length_max"]),
            n_tools=self["sim.n_tools"],
            recipes_per_tool=self["sim.recipes_per_tool"],
            n_routes=self["sim.n_routes"],
            wait_log_mu=self["sim.wait_log_mu"],
            wait_log_sigma=self["sim.wait_log_sigma"],
            planted_causes=self["sim.planted"],
            anomaly_rate=self["sim.anomaly_rate"],
            anomaly_log_mu=self["sim.anomaly_log_mu"],
            anomaly_log_sigma=self["sim.anomaly_log_sigma"],
            smooth_coef=self["sim.smooth_coef"],
            base=self["sim.base"],
            noise_sigma=self["sim.noise_sigma"],
            first_wait_h=self["sim.first_wait_h"],
            signed_contributions=self["sim.signed"],
            rng_seed=self.substream("sim"),
        )


def parse_config(text="", overrides=None):
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[pipeline]\n" + text)
    except configparser.Error as exc:
        raise InvalidConfig(str(exc)) from None
    given = dict(parser["pipeline"])
    given.update(overrides or {})
    unknown = sorted(set(given) - set(KEYS))
    if unknown:
        raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
    raw, values = {}, {}
    for key, (default, parse, _) in KEYS.items():
        text_value = given.get(key, default).strip()
        try:
            values[key] = parse(text_value)
        except (ValueError, TypeError) as exc:
            raise InvalidConfig(f"{key}: {exc}") from None
        raw[key] = text_value
    cfg = PipelineConfig(values, raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if len(cfg["separator"]) != 1:
        raise InvalidConfig("separator must be a single character")
    if not cfg["attribute_order"]:
        raise InvalidConfig("attribute_order is empty")
    if cfg["time.unit"] not in TIME_UNITS:
        raise InvalidConfig(f"time.unit must be one of {sorted(TIME_UNITS)}")
    try:
        cfg.kernel_params()
        cfg.t0_policy()
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    if cfg["embed.dim"] < 1:
        raise InvalidConfig("embed.dim must be positive")
    if cfg["cv.folds"] < 2 or cfg["cv.inner_folds"] < 2:
        raise InvalidConfig("fold counts must be >= 2")
    if cfg["pla.output_activation"] not in ("softplus", "relu"):
        raise InvalidConfig("pla.output_activation must be softplus or relu")
    if cfg["pla.input_transform"] not in ("diff", "raw"):
        raise InvalidConfig("pla.input_transform must be diff or raw")
    for key in ("pla.context_init", "pla.output_init"):
        if cfg[key] not in ("zero", "glorot"):
            raise InvalidConfig(f"{key} must be zero or glorot")
    if cfg["pla.mu"] < 0 or cfg["pla.mu_td"] < 0 or any(v < 0 for v in cfg["pla.mu_td_grid"]):
        raise InvalidConfig("PLA weights must be non-negative")
    if cfg["ptr.eta"] < 0 or any(v < 0 for v in cfg["ptr.eta_grid"]):
        raise InvalidConfig("ptr.eta must be non-negative")
    cfg.sim_config().validate()


def load_config(path=None, overrides=None):
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, overrides)


def render_defaults():
    lines = []
    for key, (default, _, doc) in KEYS.items():
        lines.append(f"# {doc}")
        lines.append(f"{key} = {default}")
    return "\n".join(lines) + "\n"
