"""Run configuration: pydantic models with desk-scale defaults.

A config file (JSON) is loaded into `ArenaConfig`; CLI `--set section.key=value`
overrides are applied on top and revalidated.
"""
from typing import Any, Dict, List, Optional, Tuple
import json

from pydantic import BaseModel, ValidationError, validator

from cards import ARCHETYPES
from ppo import VARIANTS, TrainCoeffs
from rewards import DEFAULT_ALPHA, DEFAULT_DENSE_WEIGHTS, DEFAULT_GAMMA, SCHEMES, ShapingCoeffs

PROFILES = ('desk', 'full')
AGENT_KINDS = tuple(VARIANTS)


class EngineConfig(BaseModel):
    turn_cap: int = 30

    @validator('turn_cap')
    def _positive(cls, v):
        if v < 1:
            raise ValueError('turn_cap must be positive')
        return v


class RewardConfig(BaseModel):
    scheme: str = 'shaped'
    alpha: Tuple[float, float, float, float, float] = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA
    dense_weights: Tuple[float, float, float] = DEFAULT_DENSE_WEIGHTS

    @validator('scheme')
    def _known_scheme(cls, v):
        if v not in SCHEMES:
            raise ValueError(f'scheme must be one of {list(SCHEMES)}')
        return v

    def shaping(self) -> ShapingCoeffs:
        return ShapingCoeffs(alpha=tuple(self.alpha), gamma=self.gamma)


class NetworkConfig(BaseModel):
    hidden: List[int] = [64, 64]
    gate_hidden: int = 32

    @validator('hidden')
    def _non_empty(cls, v):
        if not v or any(h < 1 for h in v):
            raise ValueError('hidden must list positive layer widths')
        return v


class TrainConfig(BaseModel):
    total_steps: int = 50_000
    n_steps: int = 512
    epochs: int = 10
    minibatch: int = 256
    lr_start: float = 3e-4
    lr_end: float = 1e-5
    clip: float = 0.2
    gamma: float = 0.995
    lam: float = 0.95
    c_v: float = 0.5
    c_h_start: float = 0.05
    c_h_end: float = 0.005
    c_f: float = 0.5
    c_c: float = 0.1
    c_e: float = 0.0
    grad_norm_max: float = 0.5
    delta: float = 1e-6

    @validator('total_steps', 'n_steps', 'epochs', 'minibatch')
    def _positive(cls, v):
        if v < 1:
            raise ValueError('must be positive')
        return v

    def coeffs(self) -> TrainCoeffs:
        return TrainCoeffs(c_v=self.c_v, c_h_start=self.c_h_start, c_h_end=self.c_h_end, c_f=self.c_f,
                           c_c=self.c_c, c_e=self.c_e, clip=self.clip, gamma=self.gamma, lam=self.lam,
                           epochs=self.epochs, minibatch=self.minibatch, n_steps=self.n_steps,
                           grad_norm_max=self.grad_norm_max, lr_start=self.lr_start, lr_end=self.lr_end,
                           delta=self.delta)


class CWMConfig(BaseModel):
    embed_dim: int = 32
    hidden: int = 128
    lr: float = 1e-3
    replay_size: int = 20_000
    steps_per_rollout: int = 16
    batch_size: int = 128
    causal_weight: float = 0.6
    explore_start: float = 0.10
    explore_end: float = 0.01


class HarnessConfig(BaseModel):
    seeds: List[int] = [0, 1]
    episodes: int = 30
    run_dir: str = 'runs/default'
    schedule: str = 'pool'
    resamples: int = 10_000
    decks: List[str] = list(ARCHETYPES)
    agents: List[str] = ['ppo', 'cgfa']
    ablation_deck: str = 'mono_red_aggro'

    @validator('schedule')
    def _known_schedule(cls, v):
        if v not in ('fixed', 'pool'):
            raise ValueError("schedule must be 'fixed' or 'pool'")
        return v

    @validator('episodes', 'resamples')
    def _positive(cls, v):
        if v < 1:
            raise ValueError('must be positive')
        return v

    @validator('decks', each_item=True)
    def _known_deck(cls, v):
        if v not in ARCHETYPES:
            raise ValueError(f"unknown archetype '{v}'")
        return v

    @validator('agents', each_item=True)
    def _known_agent(cls, v):
        if v not in AGENT_KINDS:
            raise ValueError(f"unknown agent '{v}'")
        return v


class ArenaConfig(BaseModel):
    profile: str = 'desk'
    engine: EngineConfig = EngineConfig()
    reward: RewardConfig = RewardConfig()
    network: NetworkConfig = NetworkConfig()
    train: TrainConfig = TrainConfig()
    cwm: CWMConfig = CWMConfig()
    harness: HarnessConfig = HarnessConfig()

    @validator('profile')
    def _known_profile(cls, v):
        if v not in PROFILES:
            raise ValueError(f'profile must be one of {list(PROFILES)}')
        return v


def full_profile() -> ArenaConfig:
    """Full-scale settings: [512, 256] nets, 2048-step rollouts, 10^6 steps, 7 seeds, 300 episodes."""
    return ArenaConfig(
        profile='full',
        network=NetworkConfig(hidden=[512, 256]),
        train=TrainConfig(total_steps=1_000_000, n_steps=2048),
        harness=HarnessConfig(seeds=list(range(7)), episodes=300),
    )


def profile_config(name: str) -> ArenaConfig:
    if name not in PROFILES:
        raise ValueError(f"Unknown profile '{name}'. Expected one of {list(PROFILES)}")
    return full_profile() if name == 'full' else ArenaConfig()


def _coerce(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: ArenaConfig, overrides: List[str]) -> ArenaConfig:
    """Apply `section.key=value` strings; values parse as JSON when possible."""
    data = config.dict()
    for item in overrides or []:
        if '=' not in item:
            raise ValueError(f"override '{item}' must look like section.key=value")
        path, raw = item.split('=', 1)
        keys = path.strip().split('.')
        node = data
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ValueError(f"unknown config section '{path}'")
            node = node[key]
        if keys[-1] not in node:
            raise ValueError(f"unknown config key '{path}'")
        node[keys[-1]] = _coerce(raw)
    return validate_config(data)


def validate_config(data: Dict[str, Any]) -> ArenaConfig:
    try:
        return ArenaConfig.parse_obj(data)
    except ValidationError as exc:
        raise ValueError(f'invalid config: {exc}') from exc


def load_config(path: Optional[str] = None, overrides: Optional[List[str]] = None,
                profile: str = 'desk') -> ArenaConfig:
    config = profile_config(profile)
    if path:
        with open(path, 'r', encoding='utf-8') as f:
            merged = config.dict()
            for section, values in json.load(f).items():
                if isinstance(values, dict) and isinstance(merged.get(section), dict):
                    merged[section].update(values)
                else:
                    merged[section] = values
        config = validate_config(merged)
    return apply_overrides(config, overrides or [])


def save_config(config: ArenaConfig, path: str) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(config.dict(), indent=2))
    return path
