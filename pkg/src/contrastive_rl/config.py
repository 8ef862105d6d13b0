"""Experiment configuration: namespaced flat key=value files, two profiles.

The paper-scale profile carries the published hyperparameters verbatim
(continuous-control table for SAC, discrete-control table for DQN); the
desk profile shrinks rendering, batch and budget so a full ablation
matrix runs on a laptop CPU.  Serialization round-trips losslessly and
unknown keys are rejected.
"""

from dataclasses import dataclass, field, fields

AGENT_KINDS = ("sac", "dqn", "state_sac_oracle")
PROFILES = ("desk", "paper")


@dataclass
class EnvSection:
    id: str = "pointmass"
    render_size: int = 38
    frame_stack: int = 3
    action_repeat: int = 4
    episode_len: int = 125
    grid_size: int = 5


@dataclass
class EncoderSection:
    crop_size: int = 32
    conv_layers: int = 4
    num_filters: int = 32
    latent_dim: int = 50


@dataclass
class AgentSection:
    kind: str = "sac"
    hidden_dim: int = 256
    discount: float = 0.99
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # SAC
    init_temperature: float = 0.1
    alpha_lr: float = 1e-4
    alpha_beta1: float = 0.5
    critic_tau: float = 0.01
    critic_target_update_freq: int = 2
    target_entropy: float = 0.0      # 0 means automatic: -action_dim
    log_std_min: float = -10.0
    log_std_max: float = 2.0
    # DQN
    n_step: int = 3
    target_update_period: int = 200
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_decay_steps: int = 3000
    state_features: bool = False


@dataclass
class ContrastiveSection:
    enabled: bool = True
    encoder_tau: float = 0.05        # key-encoder momentum m = 1 - tau
    weight: float = 1.0
    first_frame: bool = False


@dataclass
class ReplaySection:
    capacity: int = 20000
    batch_size: int = 32
    min_fill: int = 400


@dataclass
class TrainSection:
    seed: int = 1
    total_env_steps: int = 30000
    initial_steps: int = 500
    updates_per_step: int = 1
    no_aug_rl: bool = False
    detach_encoder: bool = False
    strict_checks: bool = False
    save_replay: bool = False
    dump_frames: int = 0


@dataclass
class EvalSection:
    episodes: int = 10
    every_isteps: int = 1500


@dataclass
class ExperimentConfig:
    env: EnvSection = field(default_factory=EnvSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    agent: AgentSection = field(default_factory=AgentSection)
    contrastive: ContrastiveSection = field(default_factory=ContrastiveSection)
    replay: ReplaySection = field(default_factory=ReplaySection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self):
        if self.env.id not in ("pointmass", "pendulum", "gridchase"):
            raise ValueError(f"unknown env id {self.env.id!r}")
        if self.agent.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.agent.kind!r}")
        if self.encoder.crop_size > self.env.render_size:
            raise ValueError(
                f"crop {self.encoder.crop_size} exceeds render {self.env.render_size}")
        if self.env.frame_stack < 1 or self.env.action_repeat < 1:
            raise ValueError("frame_stack and action_repeat must be >= 1")
        if self.encoder.latent_dim != 50 or self.encoder.conv_layers != 4 \
                or self.encoder.num_filters != 32:
            raise ValueError("encoder architecture is fixed: 4 layers, 32 filters, latent 50")
        if not 0.0 <= self.contrastive.encoder_tau <= 1.0:
            raise ValueError("contrastive.encoder_tau must be in [0, 1]")
        if self.train.detach_encoder and not self.contrastive.enabled:
            raise ValueError("detach_encoder requires the contrastive objective; "
                             "nothing would train the convolutional stack")
        if self.agent.kind == "state_sac_oracle" and self.contrastive.enabled:
            raise ValueError("the state oracle does not use an encoder; "
                             "set contrastive.enabled=false")
        return self


_SECTIONS = ("env", "encoder", "agent", "contrastive", "replay", "train", "eval")


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text, ftype):
    if ftype is bool:
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if ftype is int:
        return int(text)
    if ftype is float:
        return float(text)
    return text


def to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for sect in _SECTIONS:
        obj = getattr(cfg, sect)
        for f in fields(obj):
            lines.append(f"{sect}.{f.name}={_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def from_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    types = {}
    for sect in _SECTIONS:
        for f in fields(getattr(cfg, sect)):
            types[f"{sect}.{f.name}"] = f.type if isinstance(f.type, type) else None
    # dataclass field types arrive as strings under future annotations; map by value
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        val = val.strip()
        if "." not in key:
            raise ValueError(f"line {line_no}: key {key!r} is not namespaced")
        sect, name = key.split(".", 1)
        if sect not in _SECTIONS:
            raise ValueError(f"line {line_no}: unknown section {sect!r}")
        obj = getattr(cfg, sect)
        valid = {f.name: f for f in fields(obj)}
        if name not in valid:
            raise ValueError(f"line {line_no}: unknown key {key!r}")
        current = getattr(obj, name)
        setattr(obj, name, _parse_value(val, type(current)))
    return cfg


def load_config(path, base: ExperimentConfig = None) -> ExperimentConfig:
    with open(path) as f:
        return from_text(f.read(), base=base)


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as f:
        f.write(to_text(cfg))


def default_config(env_id="pointmass", agent_kind="sac", profile="desk") -> ExperimentConfig:
    """Profile defaults; desk values are the calibrated laptop-scale run."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    cfg = ExperimentConfig()
    cfg.env.id = env_id
    cfg.agent.kind = agent_kind
    discrete = env_id == "gridchase"

    if profile == "paper":
        cfg.env.render_size = 100
        cfg.encoder.crop_size = 84
        cfg.replay.capacity = 100000
        cfg.train.initial_steps = 1000
        cfg.train.total_env_steps = 100000
        cfg.agent.hidden_dim = 1024
        cfg.replay.batch_size = 512
        cfg.eval.every_isteps = 2500
        if discrete:
            cfg.env.frame_stack = 4
            cfg.env.action_repeat = 4
            cfg.agent.hidden_dim = 256
            cfg.agent.lr = 1e-4
            cfg.agent.adam_eps = 1.5e-5
            cfg.replay.batch_size = 32
            cfg.replay.min_fill = 1600
            cfg.agent.target_update_period = 2000
            cfg.contrastive.encoder_tau = 0.001
        else:
            cfg.env.frame_stack = 3
            cfg.env.action_repeat = 4
    else:
        cfg.env.render_size = 38
        cfg.encoder.crop_size = 32
        if discrete:
            cfg.env.frame_stack = 4
            cfg.env.action_repeat = 1
            cfg.env.episode_len = 30
            cfg.agent.lr = 3e-4
            cfg.replay.min_fill = 400
            cfg.contrastive.encoder_tau = 0.01
            cfg.train.initial_steps = 400
            cfg.train.total_env_steps = 12000
            cfg.eval.every_isteps = 2000

    if agent_kind == "state_sac_oracle":
        cfg.contrastive.enabled = False
    if agent_kind == "dqn" and cfg.agent.state_features:
        cfg.contrastive.enabled = False
    return cfg.validate()
