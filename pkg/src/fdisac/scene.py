"""Scenario configuration and channel synthesis for a full-duplex ISAC cell.

A dual-function base station with separate transmit / receive uniform linear
arrays serves L downlink users and K uplink users while sensing P targets that
double as potential eavesdroppers. This module owns:

  * ScenarioConfig: every physical and budget parameter, dB fields suffixed _db
  * steering_vector: ULA array response
  * make_dl_channel / make_ul_channel: Rician cluster channels
  * make_si_channel: near-field self-interference coupling between the arrays
  * make_channel_set: one draw of every random quantity for a scenario

All randomness flows through an explicit numpy Generator so a fixed seed
reproduces every coefficient bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, asdict
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Cluster structure of the non-line-of-sight component.
N_CLUSTERS = 4
N_PATHS_PER_CLUSTER = 5

# Radar cross section of each sensed target, m^2.
TARGET_RCS = 1.0


def db_to_linear(x_db: float) -> float:
    """dB -> linear power ratio. -inf maps to 0."""
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """Linear power ratio -> dB. 0 maps to -inf."""
    if x == 0:
        return -math.inf
    return 10.0 * math.log10(x)


@dataclass
class ScenarioConfig:
    """Full parameterization of one scenario instance.

    Power-like fields are in dB relative to 1 W; gains in dBi. Defaults follow
    the baseline convergence scenario of the system study.
    """

    n_tx: int = 12            # DFRC transmit antennas N_T
    n_rx: int = 6             # DFRC receive antennas N_R
    n_dl: int = 1             # downlink users L
    n_ul: int = 2             # uplink users K
    n_eve: int = 1            # sensed targets / eavesdroppers P

    carrier_hz: float = 28e9  # carrier frequency
    element_spacing: float = 0.5  # ULA spacing in wavelengths

    r_dl: float = 20.0        # DL user radius, m
    r_ul: float = 15.0        # UL user radius, m
    r_eve: float = 17.0       # target radius, m

    rician_k_db: float = 15.0       # Rician factor; -inf = Rayleigh
    residual_si_db: float = -110.0  # residual self-interference power beta
    pathloss_exponent: float = 2.0
    shadowing_db: float = 20.0      # log-normal shadowing std dev, dB
    clutter_power_db: float = -60.0  # diagonal clutter covariance level

    gain_dfrc_tx_db: float = 25.0
    gain_dfrc_rx_db: float = 25.0
    gain_dl_db: float = 12.0
    gain_ul_db: float = 17.0
    gain_eve_db: float = 12.0

    noise_dfrc_db: float = -70.0  # sigma_n^2 at the BS receive array
    noise_dl_db: float = -70.0    # sigma_l^2 at each DL user
    noise_eve_db: float = -65.0   # sigma_p^2 at each eavesdropper

    p_dl_v_db: float = 0.0    # DL beamforming budget P_DL^V
    p_dl_w_db: float = 0.0    # artificial-noise budget P_DL^W
    p_ul_db: float = 0.0      # total UL power budget P_UL

    ismr_max_db: float = 20.0          # integrated sidelobe-to-mainlobe cap
    mainlobe_halfwidth_deg: float = 5.0
    grid_resolution_deg: float = 0.1

    seed: int = 0

    # ---- derived linear quantities ----

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def rician_k(self) -> float:
        return db_to_linear(self.rician_k_db)

    @property
    def si_beta(self) -> float:
        return db_to_linear(self.residual_si_db)

    @property
    def clutter_power(self) -> float:
        return db_to_linear(self.clutter_power_db)

    @property
    def noise_dfrc(self) -> float:
        return db_to_linear(self.noise_dfrc_db)

    @property
    def noise_dl(self) -> float:
        return db_to_linear(self.noise_dl_db)

    @property
    def noise_eve(self) -> float:
        return db_to_linear(self.noise_eve_db)

    @property
    def p_dl_v(self) -> float:
        return db_to_linear(self.p_dl_v_db)

    @property
    def p_dl_w(self) -> float:
        return db_to_linear(self.p_dl_w_db)

    @property
    def p_ul(self) -> float:
        return db_to_linear(self.p_ul_db)

    @property
    def ismr_max(self) -> float:
        return db_to_linear(self.ismr_max_db)

    # ---- validation and serialization ----

    def validate(self) -> None:
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("array sizes must be positive")
        if self.n_dl < 0 or self.n_ul < 0 or self.n_eve < 0:
            raise ValueError("entity counts must be nonnegative")
        if self.n_dl + self.n_ul == 0:
            raise ValueError("at least one communication user is required")
        for name in ("r_dl", "r_ul", "r_eve", "carrier_hz", "element_spacing"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("p_dl_v_db", "p_dl_w_db", "p_ul_db"):
            v = getattr(self, name)
            if math.isnan(v) or v == math.inf:
                raise ValueError(f"{name} must be finite or -inf")
        if self.pathloss_exponent < 0:
            raise ValueError("pathloss_exponent must be nonnegative")
        if self.mainlobe_halfwidth_deg <= 0 or self.grid_resolution_deg <= 0:
            raise ValueError("mask geometry parameters must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class ChannelSet:
    """One realization of every channel in the scenario.

    Arrays are frozen (read-only) after construction. Noise variances and the
    residual-SI factor ride along so downstream metrics close over
    (channels, design point) alone.
    """

    h_dl: np.ndarray        # (L, N_T) BS -> DL user channels
    h_ul: np.ndarray        # (K, N_R) UL user -> BS channels
    q_ul_dl: np.ndarray     # (K, L) UL user -> DL user scalars
    g_ul_eve: np.ndarray    # (K, P) UL user -> eavesdropper scalars
    alpha: np.ndarray       # (P,) one-way BS -> eavesdropper coefficients
    gamma: np.ndarray       # (P,) two-way BS -> target -> BS coefficients
    theta: np.ndarray       # (P,) target angles, rad
    h_si: np.ndarray        # (N_R, N_T) unit-modulus self-interference
    r_clutter: np.ndarray   # (N_R, N_R) clutter covariance
    beta: float             # residual SI power factor
    noise_dl: np.ndarray    # (L,) sigma_l^2
    noise_dfrc: float       # sigma_n^2
    noise_eve: np.ndarray   # (P,) sigma_p^2
    element_spacing: float  # ULA spacing, wavelengths
    dl_angles: np.ndarray   # (L,) rad
    ul_angles: np.ndarray   # (K,) rad

    @property
    def n_tx(self) -> int:
        return self.h_si.shape[1]

    @property
    def n_rx(self) -> int:
        return self.h_si.shape[0]

    @property
    def n_dl(self) -> int:
        return self.h_dl.shape[0]

    @property
    def n_ul(self) -> int:
        return self.h_ul.shape[0]

    @property
    def n_eve(self) -> int:
        return self.alpha.shape[0]

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                if not np.all(np.isfinite(v.view(float))):
                    raise ValueError(f"non-finite entries in {f.name}")
                v.flags.writeable = False
        herm_gap = np.max(np.abs(self.r_clutter - self.r_clutter.conj().T)) if self.r_clutter.size else 0.0
        if herm_gap > 1e-10:
            raise ValueError("r_clutter must be Hermitian")
        if self.r_clutter.size:
            lam = np.linalg.eigvalsh(self.r_clutter)
            if lam.min() < -1e-10:
                raise ValueError("r_clutter must be PSD")
        if self.h_si.size and np.max(np.abs(np.abs(self.h_si) - 1.0)) > 1e-12:
            raise ValueError("h_si entries must be unit modulus")


def steering_vector(n: int, theta: float, spacing: float = 0.5) -> np.ndarray:
    """ULA array response; entry m is exp(j*2*pi*spacing*m*sin(theta))."""
    m = np.arange(n)
    return np.exp(1j * 2.0 * np.pi * spacing * m * np.sin(theta))


def _link_amplitude(cfg: ScenarioConfig, gain_tx_db: float, gain_rx_db: float,
                    distance: float, shadow_db: float = 0.0) -> float:
    """Amplitude of a one-way link: Friis intercept at 1 m, exponent rolloff."""
    gains = db_to_linear(gain_tx_db) * db_to_linear(gain_rx_db)
    ref = cfg.wavelength / (4.0 * np.pi)
    power = gains * ref**2 * distance ** (-cfg.pathloss_exponent)
    return math.sqrt(power) * 10.0 ** (shadow_db / 20.0)


def _rician_vector(n: int, angle: float, spacing: float, kappa: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Unit-scale Rician mix of a LoS steering vector and a cluster NLoS part.

    Both components have E||.||^2 = n, so the mix does too for any kappa.
    """
    los = steering_vector(n, angle, spacing)
    n_paths = N_CLUSTERS * N_PATHS_PER_CLUSTER
    path_angles = rng.uniform(-np.pi / 2, np.pi / 2, size=n_paths)
    path_gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
    nlos = np.zeros(n, dtype=complex)
    for g, ang in zip(path_gains, path_angles):
        nlos += g * steering_vector(n, ang, spacing)
    nlos /= np.sqrt(n_paths)
    if np.isinf(kappa):
        return los
    w_los = np.sqrt(kappa / (kappa + 1.0))
    w_nlos = np.sqrt(1.0 / (kappa + 1.0))
    return w_los * los + w_nlos * nlos


def make_dl_channel(cfg: ScenarioConfig, user_index: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw one BS -> DL-user channel (length N_T).

    The user angle, shadowing and NLoS cluster gains come from `rng`;
    `user_index` identifies the user for reporting only.
    """
    del user_index
    angle = rng.uniform(-np.pi / 2, np.pi / 2)
    shadow = rng.normal(0.0, cfg.shadowing_db)
    amp = _link_amplitude(cfg, cfg.gain_dfrc_tx_db, cfg.gain_dl_db, cfg.r_dl, shadow)
    return amp * _rician_vector(cfg.n_tx, angle, cfg.element_spacing, cfg.rician_k, rng)


def make_ul_channel(cfg: ScenarioConfig, user_index: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw one UL-user -> BS channel (length N_R)."""
    del user_index
    angle = rng.uniform(-np.pi / 2, np.pi / 2)
    shadow = rng.normal(0.0, cfg.shadowing_db)
    amp = _link_amplitude(cfg, cfg.gain_ul_db, cfg.gain_dfrc_rx_db, cfg.r_ul, shadow)
    return amp * _rician_vector(cfg.n_rx, angle, cfg.element_spacing, cfg.rician_k, rng)


def make_si_channel(cfg: ScenarioConfig, separation: float | None = None,
                    distances: np.ndarray | None = None) -> np.ndarray:
    """Near-field self-interference coupling between the two ULAs.

    The arrays are parallel with element pitch spacing*lambda and broadside
    separation `separation` (default 2*lambda). Entry (i, j) is the
    unit-modulus phase exp(j*2*pi*d_ij/lambda) of the direct path from
    transmit element j to receive element i. `distances` overrides the
    geometric distance matrix (testing hook).
    """
    lam = cfg.wavelength
    if distances is None:
        if separation is None:
            separation = 2.0 * lam
        pitch = cfg.element_spacing * lam
        tx_pos = np.arange(cfg.n_tx) * pitch
        rx_pos = np.arange(cfg.n_rx) * pitch
        dx = rx_pos[:, None] - tx_pos[None, :]
        distances = np.hypot(dx, separation)
    distances = np.asarray(distances, dtype=float)
    if distances.shape != (cfg.n_rx, cfg.n_tx):
        raise ValueError("distance matrix must be (n_rx, n_tx)")
    return np.exp(1j * 2.0 * np.pi * distances / lam)


def _polar_xy(radius: float, angle: float) -> np.ndarray:
    # broadside of the arrays points along +y
    return np.array([radius * np.sin(angle), radius * np.cos(angle)])


def make_channel_set(cfg: ScenarioConfig,
                     rng: np.random.Generator | None = None) -> ChannelSet:
    """Draw every random quantity of the scenario in one deterministic pass."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    L, K, P = cfg.n_dl, cfg.n_ul, cfg.n_eve

    dl_angles = rng.uniform(-np.pi / 2, np.pi / 2, size=L)
    ul_angles = rng.uniform(-np.pi / 2, np.pi / 2, size=K)
    eve_angles = rng.uniform(-np.pi / 2, np.pi / 2, size=P)

    h_dl = np.zeros((L, cfg.n_tx), dtype=complex)
    for l in range(L):
        shadow = rng.normal(0.0, cfg.shadowing_db)
        amp = _link_amplitude(cfg, cfg.gain_dfrc_tx_db, cfg.gain_dl_db, cfg.r_dl, shadow)
        h_dl[l] = amp * _rician_vector(cfg.n_tx, dl_angles[l], cfg.element_spacing,
                                       cfg.rician_k, rng)

    h_ul = np.zeros((K, cfg.n_rx), dtype=complex)
    for k in range(K):
        shadow = rng.normal(0.0, cfg.shadowing_db)
        amp = _link_amplitude(cfg, cfg.gain_ul_db, cfg.gain_dfrc_rx_db, cfg.r_ul, shadow)
        h_ul[k] = amp * _rician_vector(cfg.n_rx, ul_angles[k], cfg.element_spacing,
                                       cfg.rician_k, rng)

    dl_pos = [_polar_xy(cfg.r_dl, a) for a in dl_angles]
    ul_pos = [_polar_xy(cfg.r_ul, a) for a in ul_angles]
    eve_pos = [_polar_xy(cfg.r_eve, a) for a in eve_angles]

    # Side links between terminals: Rayleigh scalars under distance pathloss,
    # off-boresight so no directional gains and no shadowing term.
    q_ul_dl = np.zeros((K, L), dtype=complex)
    for k in range(K):
        for l in range(L):
            d = max(np.linalg.norm(ul_pos[k] - dl_pos[l]), 1.0)
            amp = _link_amplitude(cfg, 0.0, 0.0, d)
            cn = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
            q_ul_dl[k, l] = amp * cn

    g_ul_eve = np.zeros((K, P), dtype=complex)
    for k in range(K):
        for p in range(P):
            d = max(np.linalg.norm(ul_pos[k] - eve_pos[p]), 1.0)
            amp = _link_amplitude(cfg, 0.0, 0.0, d)
            cn = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
            g_ul_eve[k, p] = amp * cn

    # Radar paths: deterministic free-space magnitudes, random phases.
    alpha_amp = _link_amplitude(cfg, cfg.gain_dfrc_tx_db, cfg.gain_eve_db, cfg.r_eve)
    alpha = alpha_amp * np.exp(1j * rng.uniform(0, 2 * np.pi, size=P))
    gamma_power = (db_to_linear(cfg.gain_dfrc_tx_db) * db_to_linear(cfg.gain_dfrc_rx_db)
                   * cfg.wavelength**2 * TARGET_RCS / (4.0 * np.pi) ** 3
                   * cfg.r_eve ** (-2.0 * cfg.pathloss_exponent))
    gamma = math.sqrt(gamma_power) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=P))

    h_si = make_si_channel(cfg)
    r_clutter = cfg.clutter_power * np.eye(cfg.n_rx)

    return ChannelSet(
        h_dl=h_dl, h_ul=h_ul, q_ul_dl=q_ul_dl, g_ul_eve=g_ul_eve,
        alpha=alpha, gamma=gamma, theta=eve_angles, h_si=h_si,
        r_clutter=r_clutter, beta=cfg.si_beta,
        noise_dl=np.full(L, cfg.noise_dl), noise_dfrc=cfg.noise_dfrc,
        noise_eve=np.full(P, cfg.noise_eve), element_spacing=cfg.element_spacing,
        dl_angles=dl_angles, ul_angles=ul_angles,
    )
