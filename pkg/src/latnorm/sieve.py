"""Perturbation-based list sieve sampler and an approximate-SVP front end.

The sampler follows the AKS / list-sieve lineage: draw a perturber y
uniform in xi*R*K, reduce the perturbed point y mod the lattice against
a list of lattice centers, and emit the residual lattice vector.  Its
contract is distributional: every sample is a lattice vector of body
norm at most a*R (hard, by rejection), samples are independent across
per-sample seed streams, and a final fair coin switches the output
between the two members of a list-coset pair whenever both satisfy the
bound, which is the observable face of the +-s pairing property that
the closest-vector pipelines rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bodies import NormBody, estimate_kissing_variant, sample_in_body
from .lattice import Basis, fast_lll, fast_lll_with_transform, nearest_plane
from .oracle import float_gso

__all__ = [
    "SieveConfig",
    "SieveSample",
    "SieveDiagnostics",
    "SieveFailure",
    "SieveSizingError",
    "sieve_sampler",
    "sample_with_retries",
    "svp_approx",
    "SvpApproxResult",
]


class SieveFailure(RuntimeError):
    """The sampler could not meet its norm bound within the retry budget."""


class SieveSizingError(SieveFailure):
    """List capacity exhausted; reports the kissing estimate used for sizing."""


@dataclass(frozen=True)
class SieveConfig:
    R: float
    N: int = 1
    epsilon: float = 0.25
    gamma: float = 0.1
    seed: int = 0
    max_list_size: Optional[int] = None   # default: kissing estimate * 2^(eps n)
    xi: float = 0.685                     # perturbation radius, in units of R
    norm_bound_factor: float = 4.0        # hard bound a on ||v||_K / R
    list_build_iters: Optional[int] = None
    per_sample_retries: int = 48

    def __post_init__(self):
        if self.R <= 0 or self.N < 1:
            raise ValueError("need R > 0 and N >= 1")
        if not (0 < self.gamma < 1) or self.epsilon <= 0:
            raise ValueError("gamma in (0,1) and epsilon > 0 required")


@dataclass(frozen=True)
class SieveSample:
    coeffs: np.ndarray            # integer coefficients in the input basis
    vector: np.ndarray            # float embedding
    value: float                  # body norm of the vector
    norm_bound: float             # a * R in force for this sample
    perturber: np.ndarray
    perturber_norm: float
    perturbed_point: np.ndarray   # vector + perturber (lattice + perturbation)
    coin: int
    pair_partner_coeffs: Optional[np.ndarray]  # other member of the (u, u+s') pair
    chain_length: int
    coset_id: int                 # list index of the last reduction center, -1 if none
    stream_index: int


@dataclass(frozen=True)
class SieveDiagnostics:
    list_size: int
    realized_a: float             # max emitted value / R
    build_iters: int
    retries_total: int
    kissing_count: Optional[int]
    max_list_size: int


def _default_list_params(basis: Basis, body: NormBody, config: SieveConfig,
                         rng: np.random.Generator):
    n = basis.rank
    kiss = None
    if config.max_list_size is None:
        kiss = estimate_kissing_variant(body, config.gamma,
                                        budget=min(1500, 120 * n), rng=rng)
        cap = int(kiss.count * 2 ** (config.epsilon * n)) * 2
        cap = max(128, min(20000, cap))
    else:
        cap = config.max_list_size
    build = config.list_build_iters
    if build is None:
        build = min(4 * cap, 600 + 80 * n)
    return cap, build, (kiss.count if kiss is not None else None)


class _Reducer:
    """Shared preprocessed state: float basis, GSO, and the center list.

    Coefficients are tracked w.r.t. the LLL-preprocessed basis and mapped
    back to the caller's basis through the integer unimodular transform.
    """

    def __init__(self, basis: Basis, body: NormBody, config: SieveConfig):
        self.body = body
        self.config = config
        self.red, self.transform = fast_lll_with_transform(basis)
        self.bf = self.red.as_float()
        self.gso = float_gso(self.bf)
        self.basis_in = basis
        self.centers_emb: list[np.ndarray] = []
        self.centers_coeffs: list[np.ndarray] = []
        self._emb_matrix = np.zeros((0, self.bf.shape[0]))

    def to_input_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        return self.transform @ coeffs

    def initial(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = nearest_plane(self.bf, self.gso, y)
        coeffs = -k
        z = y + self.bf @ coeffs
        return z, coeffs

    def chain(self, z: np.ndarray, coeffs: np.ndarray,
              max_steps: int = 500) -> tuple[np.ndarray, np.ndarray, int, int]:
        """First-fit reduction of the perturbed point against the list."""
        body = self.body
        shrink = 1.0 - self.config.gamma
        last = -1
        steps = 0
        if not self.centers_emb:
            return z, coeffs, 0, last
        cur = float(body.norm(z))
        while steps < max_steps:
            diffs = z[None, :] - self._emb_matrix
            norms = np.atleast_1d(body.norm(diffs))
            hits = np.nonzero(norms <= shrink * cur)[0]
            if hits.size == 0:
                break
            i = int(hits[0])
            z = diffs[i]
            coeffs = coeffs - self.centers_coeffs[i]
            cur = float(norms[i])
            last = i
            steps += 1
        return z, coeffs, steps, last

    def add_center(self, emb: np.ndarray, coeffs: np.ndarray) -> None:
        self.centers_emb.append(emb)
        self.centers_coeffs.append(coeffs)
        self._emb_matrix = np.vstack([self._emb_matrix, emb[None, :]])

    @property
    def list_size(self) -> int:
        return len(self.centers_emb)


def sieve_sampler(basis: Basis, body: NormBody, config: SieveConfig,
                  rng: Optional[np.random.Generator] = None
                  ) -> tuple[list[SieveSample], SieveDiagnostics]:
    """Draw N lattice-vector samples with the list-sieve distribution contract.

    Per-sample RNG streams are spawned from the config seed (or the
    caller's generator), so parallel and serial evaluation would emit
    identical sample lists; determinism is keyed to (config, seed).
    """
    if body.dim != basis.dim:
        raise ValueError("body dimension must match basis dimension")
    if rng is None:
        root = np.random.SeedSequence(config.seed)
        children = root.spawn(config.N + 2)
        streams = [np.random.default_rng(c) for c in children]
    else:
        streams = rng.spawn(config.N + 2)
    rng_sizing, rng_build = streams[0], streams[1]

    reducer = _Reducer(basis, body, config)
    cap, build_iters, kiss_count = _default_list_params(basis, body, config, rng_sizing)
    bound = config.norm_bound_factor * config.R
    perturb_body = body.scaled(config.xi * config.R)

    for _ in range(build_iters):
        if reducer.list_size >= cap:
            break
        y = sample_in_body(perturb_body, rng_build)
        z, coeffs = reducer.initial(y)
        z, coeffs, _, _ = reducer.chain(z, coeffs)
        u = z - y
        if np.any(coeffs) and float(body.norm(u)) > bound:
            reducer.add_center(u, coeffs)

    xi_R = config.xi * config.R
    short_emb = reducer.bf[:, 0]
    short_coeffs = np.zeros(basis.rank, dtype=np.int64)
    short_coeffs[0] = 1

    samples: list[SieveSample] = []
    retries_total = 0
    realized = 0.0
    for i in range(config.N):
        stream = streams[i + 2]
        emitted = None
        for _ in range(config.per_sample_retries):
            y = sample_in_body(perturb_body, stream)
            z, coeffs, steps, last = reducer.chain(*reducer.initial(y))
            u = z - y
            val = float(body.norm(u))
            if val > bound:
                retries_total += 1
                continue
            coin = int(stream.integers(2))
            vec, cfs = u, coeffs
            partner = None
            y_out = y
            # (u, u+s') pair, list-internal: undo the last chain step
            if last >= 0:
                alt_c = coeffs + reducer.centers_coeffs[last]
                alt_v = u + reducer.centers_emb[last]
                if float(body.norm(alt_v)) <= bound:
                    partner = alt_c
                    if coin:
                        vec, cfs, partner = alt_v, alt_c, coeffs
                        val = float(body.norm(vec))
            # otherwise couple through the shortest reduced column: when the
            # shifted perturber y+s is admissible too, u and u-s come from
            # indistinguishable draws and the fair coin mixes them exactly
            if partner is None:
                for sgn in (1, -1):
                    y2 = y + sgn * short_emb
                    if float(body.norm(y2)) > xi_R:
                        continue
                    alt_c = coeffs - sgn * short_coeffs
                    alt_v = u - sgn * short_emb
                    if float(body.norm(alt_v)) > bound:
                        continue
                    partner = alt_c
                    if coin:
                        vec, cfs, partner = alt_v, alt_c, coeffs
                        val = float(body.norm(vec))
                        y_out = y2
                    break
            emitted = SieveSample(
                coeffs=reducer.to_input_coeffs(cfs).astype(np.int64),
                vector=vec,
                value=val,
                norm_bound=bound,
                perturber=y_out,
                perturber_norm=float(body.norm(y_out)),
                perturbed_point=vec + y_out,
                coin=coin,
                pair_partner_coeffs=(None if partner is None
                                     else reducer.to_input_coeffs(partner).astype(np.int64)),
                chain_length=steps,
                coset_id=last,
                stream_index=i,
            )
            break
        if emitted is None:
            if reducer.list_size >= cap:
                raise SieveSizingError(
                    f"list cap {cap} reached (kissing estimate {kiss_count}) and "
                    f"samples still exceed the norm bound {bound:.3g}")
            raise SieveFailure(
                f"sample {i} failed to meet norm bound {bound:.3g} after "
                f"{config.per_sample_retries} retries")
        realized = max(realized, emitted.value)
        samples.append(emitted)

    diags = SieveDiagnostics(
        list_size=reducer.list_size,
        realized_a=realized / config.R,
        build_iters=build_iters,
        retries_total=retries_total,
        kissing_count=kiss_count,
        max_list_size=cap,
    )
    return samples, diags


def sample_with_retries(basis: Basis, body: NormBody, config: SieveConfig,
                        attempts: int = 4) -> tuple[list[SieveSample], SieveDiagnostics]:
    """Run the sampler, reseeding on failure (success probability per run >= 1/2)."""
    last_err: Exception | None = None
    for attempt in range(attempts):
        cfg = config if attempt == 0 else _reseed(config, attempt)
        try:
            return sieve_sampler(basis, body, cfg)
        except SieveFailure as err:
            last_err = err
    raise SieveFailure(f"all {attempts} sieve attempts failed: {last_err}")


def _reseed(config: SieveConfig, attempt: int) -> SieveConfig:
    new_seed = int(np.random.SeedSequence((config.seed, attempt)).generate_state(1)[0])
    return SieveConfig(R=config.R, N=config.N, epsilon=config.epsilon,
                       gamma=config.gamma, seed=new_seed,
                       max_list_size=config.max_list_size, xi=config.xi,
                       norm_bound_factor=config.norm_bound_factor,
                       list_build_iters=config.list_build_iters,
                       per_sample_retries=config.per_sample_retries)


@dataclass(frozen=True)
class SvpApproxResult:
    coeffs: np.ndarray
    vector: np.ndarray
    value: float
    grid: list[float]
    grid_index: int
    diagnostics: SieveDiagnostics


def svp_approx(basis: Basis, body: NormBody, config: SieveConfig) -> SvpApproxResult:
    """Approximate shortest vector by sieving over a geometric length grid.

    The instance is normalized by the body norm of the first reduced
    column, so the procedure is exactly scale-equivariant; the grid then
    spans [lower bound, 1] with ratio (1 + 1/n).
    """
    red, unimod = fast_lll_with_transform(basis)
    bf = red.as_float()
    n = red.rank
    scale = float(body.norm(bf[:, 0]))
    bn = bf / scale
    _, _, norms_sq = float_gso(bn)
    r_sand = body.sandwich().R
    lo = max(float(np.sqrt(norms_sq.min())) / r_sand, 2.0 ** (-n))
    ratio = 1.0 + 1.0 / n
    grid = [lo]
    while grid[-1] < 1.0:
        grid.append(lo * ratio ** len(grid))
    grid[-1] = min(grid[-1], 1.0)

    best = None
    best_idx = -1
    best_diags = None
    for gi, R in enumerate(grid):
        cfg = _with_R(config, R, gi)
        try:
            samples, diags = sample_with_retries(_float_basis(bn), body, cfg)
        except SieveFailure:
            continue
        nz = [s for s in samples if np.any(s.coeffs)]
        if not nz:
            continue
        cand = min(nz, key=lambda s: s.value)
        if best is None or cand.value < best.value:
            best, best_idx, best_diags = cand, gi, diags
        if best is not None and best.value <= 1.5 * R:
            break
    if best is None:
        raise SieveFailure("no nonzero vector found on the whole length grid")
    coeffs_in = unimod @ best.coeffs   # back to the caller's basis
    vector = bf @ best.coeffs
    value = scale * best.value
    return SvpApproxResult(coeffs=coeffs_in.astype(np.int64), vector=vector,
                           value=value, grid=[g * scale for g in grid],
                           grid_index=best_idx, diagnostics=best_diags)


def _with_R(config: SieveConfig, R: float, gi: int) -> SieveConfig:
    seed = int(np.random.SeedSequence((config.seed, 7, gi)).generate_state(1)[0])
    return SieveConfig(R=R, N=config.N, epsilon=config.epsilon, gamma=config.gamma,
                       seed=seed, max_list_size=config.max_list_size, xi=config.xi,
                       norm_bound_factor=config.norm_bound_factor,
                       list_build_iters=config.list_build_iters,
                       per_sample_retries=config.per_sample_retries)


def _float_basis(bn: np.ndarray) -> Basis:
    from fractions import Fraction

    m = np.empty(bn.shape, dtype=object)
    for idx, v in np.ndenumerate(bn):
        m[idx] = Fraction(float(v))
    return Basis(m)
