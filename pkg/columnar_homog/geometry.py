"""
Periodic cross-section geometries on the unit cell Y2 = (-1/2, 1/2)^2,
their rasterization, locally-periodic modulation by a density field rho and
the high-contrast schedules that drive the inclusion conductivity to infinity
while its volume fraction goes to zero.

Grids are stored as (N, N) arrays indexed [j, i] with i along y1, so
flattening is row-major with y1 fastest.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from columnar_homog.exceptions import ResolutionError, ValidationError

logger = logging.getLogger('columnar_homog.geometry')

MIN_RESOLUTION = 4
MAX_SHAPE_PARAM = math.nextafter(0.5, 0.0)
RHO_QUADRATURE_N = 256
RHO_MEAN_TOL = 1e-6
SCHEDULE_KINDS = ('disk', 'frame')


def wrap_periodic(y: Any) -> np.ndarray:
    """Map coordinates into [-1/2, 1/2)"""
    y = np.asarray(y, dtype=float)
    return y - np.floor(y + 0.5)


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """
    Inclusion set (phase 2) in the unit cross-section cell.
    disk(r): |y| <= r; frame(t): max(|y1|, |y2|) >= 1/2 - t;
    laminate(w): y1 <= -1/2 + w; custom: an indicator function or a mask.
    Boundary points belong to the inclusion.
    """

    kind: str
    param: Optional[float] = None
    exact_area: Optional[float] = None
    indicator: Optional[Callable] = None
    mask: Optional[np.ndarray] = None

    @classmethod
    def disk(cls, r: float) -> 'CellGeometry':
        if not 0 < r < 0.5:
            raise ValidationError(f'Disk radius must be in (0, 1/2), got {r}')
        return cls('disk', float(r), math.pi * r * r)

    @classmethod
    def frame(cls, t: float) -> 'CellGeometry':
        if not 0 < t < 0.5:
            raise ValidationError(f'Frame thickness must be in (0, 1/2), got {t}')
        return cls('frame', float(t), 4 * t * (1 - t))

    @classmethod
    def laminate(cls, width: float = 0.5) -> 'CellGeometry':
        if not 0 < width < 1:
            raise ValidationError(f'Laminate width must be in (0, 1), got {width}')
        return cls('laminate', float(width), float(width))

    @classmethod
    def custom(
        cls, indicator: Callable, exact_area: Optional[float] = None
    ) -> 'CellGeometry':
        """
        :param indicator: vectorized (y1, y2) -> bool array, evaluated on
            coordinates wrapped into the unit cell
        :param exact_area: inclusion area if known
        """
        return cls('custom', None, exact_area, indicator=indicator)

    @classmethod
    def from_mask(cls, mask: Any) -> 'CellGeometry':
        mask = np.array(mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ValidationError(f'Indicator mask must be square, got {mask.shape}')
        mask.setflags(write=False)
        return cls('custom', None, float(mask.mean()), mask=mask)

    @classmethod
    def from_file(cls, fpath: str) -> 'CellGeometry':
        return cls.from_mask(load_indicator(fpath))

    @classmethod
    def parse(cls, spec: str) -> 'CellGeometry':
        """
        Build from 'disk:0.25', 'frame:0.125', 'laminate:0.5' or 'file:<path>'
        """
        kind, _, value = str(spec).partition(':')
        if kind == 'file':
            return cls.from_file(value)
        builders = {'disk': cls.disk, 'frame': cls.frame, 'laminate': cls.laminate}
        if kind not in builders or not value:
            raise ValidationError(
                f'Unknown geometry {spec!r}; expected disk:<r>, frame:<t>, '
                f'laminate:<w> or file:<path>'
            )
        try:
            param = float(value)
        except ValueError:
            raise ValidationError(f'Bad geometry parameter in {spec!r}')
        return builders[kind](param)

    @property
    def label(self) -> str:
        if self.param is None:
            return self.kind
        return f'{self.kind}:{self.param:g}'

    def contains(self, y1: Any, y2: Any) -> np.ndarray:
        """Vectorized membership of points in the inclusion"""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.kind == 'disk':
            return y1 * y1 + y2 * y2 <= self.param * self.param
        if self.kind == 'frame':
            return np.maximum(np.abs(y1), np.abs(y2)) >= 0.5 - self.param
        if self.kind == 'laminate':
            return y1 <= -0.5 + self.param
        y1 = wrap_periodic(y1)
        y2 = wrap_periodic(y2)
        if self.mask is not None:
            size = self.mask.shape[0]
            i = np.clip(np.floor((y1 + 0.5) * size).astype(int), 0, size - 1)
            j = np.clip(np.floor((y2 + 0.5) * size).astype(int), 0, size - 1)
            return self.mask[j, i]
        return np.asarray(self.indicator(y1, y2), dtype=bool)


@dataclass(frozen=True, eq=False)
class PhaseField:
    """
    Rasterized two-phase indicator, True for the inclusion phase
    """

    resolution: int
    indicator: np.ndarray
    exact_fraction: Optional[float] = None
    label: str = 'custom'

    @property
    def raster_fraction(self) -> float:
        return float(np.count_nonzero(self.indicator)) / self.resolution ** 2

    @property
    def flat(self) -> np.ndarray:
        """Per-element phase flag, element (i, j) at position i + N j"""
        return self.indicator.ravel()

    def element_values(self, value1: Any, value2: Any) -> np.ndarray:
        """
        Per-element array taking value1 in the matrix and value2 in the inclusion;
        values may be scalars or arrays of equal shape
        """
        value1 = np.asarray(value1, dtype=float)
        value2 = np.asarray(value2, dtype=float)
        flag = self.flat.reshape((-1,) + (1,) * value1.ndim)
        return np.where(flag, value2, value1)


def rasterize(geom: CellGeometry, N: int) -> PhaseField:
    """
    Element (i, j) belongs to the inclusion iff its centre does
    """
    if N < MIN_RESOLUTION:
        raise ResolutionError(f'Resolution must be at least {MIN_RESOLUTION}, got {N}')
    centres = (np.arange(N) + 0.5) / N - 0.5
    y1, y2 = np.meshgrid(centres, centres)
    indicator = np.array(geom.contains(y1, y2), dtype=bool)
    indicator.setflags(write=False)
    return PhaseField(N, indicator, geom.exact_area, geom.label)


def load_indicator(fpath: str) -> np.ndarray:
    """
    Read a grid file: N, then N^2 whitespace-separated 0/1 values,
    row-major with y1 fastest
    :return: bool array of shape (N, N) indexed [j, i]
    """
    with open(fpath) as fh:
        tokens = fh.read().split()
    if not tokens:
        raise ValidationError(f'Empty grid file {fpath}')
    try:
        size = int(tokens[0])
        values = [int(tok) for tok in tokens[1:]]
    except ValueError:
        raise ValidationError(f'Grid file {fpath} must contain integers only')
    if size < 1 or len(values) != size * size:
        raise ValidationError(
            f'Grid file {fpath}: expected {size * size} values, got {len(values)}'
        )
    if any(v not in (0, 1) for v in values):
        raise ValidationError(f'Grid file {fpath}: values must be 0 or 1')
    return np.array(values, dtype=bool).reshape(size, size)


def save_indicator(indicator: Any, fpath: str) -> str:
    """Write a square mask or a PhaseField in the grid file format"""
    if isinstance(indicator, PhaseField):
        indicator = indicator.indicator
    mask = np.asarray(indicator, dtype=bool)
    with open(fpath, 'w') as fh:
        fh.write(f'{mask.shape[0]}\n')
        for row in mask.astype(int):
            fh.write(' '.join(str(v) for v in row) + '\n')
    return fpath


@dataclass(frozen=True, eq=False)
class RhoField:
    """
    Positive density x' -> rho(x') on the macroscopic cross-section (0, 1)^2,
    clamped pointwise into [c1, c2].
    kinds: constant(value), affine(g1, g2): 1 + g.(x' - 1/2),
    cosine(amplitude, wavenumber): 1 + amplitude cos(2 pi k x1), custom(func)
    """

    kind: str = 'constant'
    params: Tuple[float, ...] = (1.0,)
    c1: float = 1.0
    c2: float = 1.0
    scale: float = 1.0
    mean_normalized: bool = False
    func: Optional[Callable] = None

    def __post_init__(self):
        if not 0 < self.c1 <= self.c2:
            raise ValidationError(
                f'rho bounds must satisfy 0 < c1 <= c2, got {self.c1}, {self.c2}'
            )

    @classmethod
    def constant(cls, value: float = 1.0) -> 'RhoField':
        if not value > 0:
            raise ValidationError(f'rho must be positive, got {value}')
        return cls('constant', (float(value),), value, value, mean_normalized=value == 1)

    @classmethod
    def affine(cls, g1: float, g2: float = 0.0) -> 'RhoField':
        spread = 0.5 * (abs(g1) + abs(g2))
        if spread >= 1:
            raise ValidationError(f'Affine rho must stay positive, got slope {g1}, {g2}')
        return cls('affine', (float(g1), float(g2)), 1 - spread, 1 + spread)

    @classmethod
    def cosine(cls, amplitude: float, wavenumber: int = 1) -> 'RhoField':
        if abs(amplitude) >= 1:
            raise ValidationError(f'Cosine rho amplitude must be < 1, got {amplitude}')
        amplitude = abs(amplitude)
        return cls(
            'cosine', (amplitude, float(int(wavenumber))), 1 - amplitude, 1 + amplitude
        )

    @classmethod
    def custom(cls, func: Callable, c1: float, c2: float) -> 'RhoField':
        return cls('custom', (), c1, c2, func=func)

    @classmethod
    def parse(cls, spec: str) -> 'RhoField':
        """'constant:1', 'affine:0.4,0', 'cosine:0.3,1'"""
        kind, _, value = str(spec).partition(':')
        try:
            args = [float(v) for v in value.split(',') if v]
        except ValueError:
            raise ValidationError(f'Bad rho parameters in {spec!r}')
        if kind == 'constant':
            return cls.constant(*(args or [1.0]))
        if kind == 'affine' and 1 <= len(args) <= 2:
            return cls.affine(*args)
        if kind == 'cosine' and 1 <= len(args) <= 2:
            return cls.cosine(args[0], int(args[1]) if len(args) > 1 else 1)
        raise ValidationError(
            f'Unknown rho {spec!r}; expected constant:<v>, affine:<g1>,<g2> or '
            f'cosine:<amplitude>,<k>'
        )

    def raw(self, x1: Any, x2: Any) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.kind == 'constant':
            return np.full(np.broadcast(x1, x2).shape, self.params[0])
        if self.kind == 'affine':
            g1, g2 = self.params
            return 1 + g1 * (x1 - 0.5) + g2 * (x2 - 0.5)
        if self.kind == 'cosine':
            amplitude, k = self.params
            return 1 + amplitude * np.cos(2 * np.pi * k * x1) + 0 * x2
        return np.asarray(self.func(x1, x2), dtype=float)

    def __call__(self, x1: Any, x2: Any) -> np.ndarray:
        return np.clip(self.scale * self.raw(x1, x2), self.c1, self.c2)

    def mean(self, n: int = RHO_QUADRATURE_N) -> float:
        """Midpoint-rule average over the unit square"""
        centres = (np.arange(n) + 0.5) / n
        x1, x2 = np.meshgrid(centres, centres)
        return float(np.mean(self(x1, x2)))

    def normalized(self, auto_rescale: bool = False) -> 'RhoField':
        """
        Check that the average of rho is 1; optionally rescale until it is
        """
        field = self
        for _ in range(20):
            mean = field.mean()
            if abs(mean - 1) <= RHO_MEAN_TOL:
                return replace(field, mean_normalized=True)
            if not auto_rescale:
                raise ValidationError(f'rho has mean {mean}, expected 1')
            field = replace(field, scale=field.scale / mean)
        raise ValidationError(
            f'Cannot rescale rho to unit mean within bounds [{self.c1}, {self.c2}]'
        )


@dataclass(frozen=True)
class Stage:
    """One step of a contrast schedule"""

    index: int
    epsilon: float
    shape_param: float
    alpha2n: float
    beta2n: float
    theta_n: float
    scale_n: float
    diagnostic: float


@dataclass(frozen=True)
class ContrastSchedule:
    """
    Sequence of stages with scale_n * alpha2n = alpha2 and
    scale_n * beta2n = beta2, where scale_n is the volume fraction theta_n
    for fibres and 4 t_n for grids
    """

    kind: str
    alpha2: float
    beta2: float
    stages: Tuple[Stage, ...]
    diagnostic_name: str = ''

    def __len__(self):
        return len(self.stages)

    def __iter__(self):
        return iter(self.stages)


def _decreasing(values: Sequence[float], name: str) -> List[float]:
    values = [float(v) for v in values]
    if not values:
        raise ValidationError(f'{name} list is empty')
    if any(not v > 0 for v in values):
        raise ValidationError(f'{name} values must be positive, got {values}')
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValidationError(f'{name} values must be strictly decreasing, got {values}')
    return values


def circular_schedule(
    eps_list: Sequence[float], alpha2: float, beta2: float
) -> ContrastSchedule:
    """
    Fibres of radius r_n = eps_n, theta_n = pi r_n^2, so that
    eps_n^2 |ln r_n| -> 0, with alpha2n = alpha2 / theta_n, beta2n = beta2 / theta_n
    """
    eps = _decreasing(eps_list, 'eps')
    if eps[0] >= 0.5:
        raise ValidationError(f'Fibre radius r_n = eps_n must be below 1/2, got {eps[0]}')
    if not alpha2 > 0:
        raise ValidationError(f'alpha2 must be positive, got {alpha2}')
    stages = []
    for n, e in enumerate(eps):
        theta = math.pi * e * e
        stages.append(
            Stage(
                index=n,
                epsilon=e,
                shape_param=e,
                alpha2n=alpha2 / theta,
                beta2n=beta2 / theta,
                theta_n=theta,
                scale_n=theta,
                diagnostic=e * e * abs(math.log(e)),
            )
        )
    return ContrastSchedule('disk', alpha2, beta2, tuple(stages), 'eps2_log_r')


def grid_schedule(
    t_list: Sequence[float],
    alpha2: float,
    beta2: float,
    eps_list: Optional[Sequence[float]] = None,
) -> ContrastSchedule:
    """
    Thin grids of thickness t_n with 4 t_n alpha2n = alpha2 and
    theta_n = 4 t_n (1 - t_n). Periods default to eps_n = t_n.
    """
    ts = _decreasing(t_list, 't')
    if ts[0] >= 0.5:
        raise ValidationError(f'Grid thickness must be below 1/2, got {ts[0]}')
    if not alpha2 > 0:
        raise ValidationError(f'alpha2 must be positive, got {alpha2}')
    eps = ts if eps_list is None else _decreasing(eps_list, 'eps')
    if len(eps) != len(ts):
        raise ValidationError('eps and t lists must have the same length')
    stages = []
    for n, (t, e) in enumerate(zip(ts, eps)):
        scale = 4 * t
        alpha2n = alpha2 / scale
        stages.append(
            Stage(
                index=n,
                epsilon=e,
                shape_param=t,
                alpha2n=alpha2n,
                beta2n=beta2 / scale,
                theta_n=4 * t * (1 - t),
                scale_n=scale,
                # 4 t_n alpha2n, held constant by the schedule
                diagnostic=4 * t * alpha2n,
            )
        )
    return ContrastSchedule('frame', alpha2, beta2, tuple(stages), 'scale_alpha2')


def fixed_contrast_schedule(
    kind: str, shape_params: Sequence[float], alpha2n: float, beta2n: float
) -> ContrastSchedule:
    """
    Shrinking inclusions at a fixed inclusion conductivity, scale_n = 1
    """
    if kind not in SCHEDULE_KINDS:
        raise ValidationError(f'Unknown schedule kind {kind}')
    params = _decreasing(shape_params, 'shape')
    if not alpha2n > 0:
        raise ValidationError(f'alpha2n must be positive, got {alpha2n}')
    builder = CellGeometry.disk if kind == 'disk' else CellGeometry.frame
    stages = []
    for n, s in enumerate(params):
        theta = builder(s).exact_area
        stages.append(Stage(n, s, s, alpha2n, beta2n, theta, 1.0, alpha2n))
    return ContrastSchedule(kind, alpha2n, beta2n, tuple(stages), 'alpha2n')


def parse_schedule(spec: str, alpha2: float, beta2: float) -> ContrastSchedule:
    """'circular:0.2,0.1,0.05' or 'grid:0.125,0.0625'"""
    kind, _, value = str(spec).partition(':')
    try:
        values = [float(v) for v in value.split(',') if v]
    except ValueError:
        raise ValidationError(f'Bad schedule values in {spec!r}')
    if kind == 'circular':
        return circular_schedule(values, alpha2, beta2)
    if kind == 'grid':
        return grid_schedule(values, alpha2, beta2)
    raise ValidationError(
        f'Unknown schedule {spec!r}; expected circular:<eps,...> or grid:<t,...>'
    )


def _rho_at(rho: Optional[RhoField], cell_center: Any) -> float:
    if rho is None:
        return 1.0
    x1, x2 = cell_center
    return float(rho(x1, x2))


def modulated_radius(
    rho: Optional[RhoField], r_base: float, cell_center: Any
) -> float:
    """r_base sqrt(rho(x')), clamped below 1/2 so the fibre stays inside the cell"""
    return min(r_base * math.sqrt(_rho_at(rho, cell_center)), MAX_SHAPE_PARAM)


def modulated_thickness(
    rho: Optional[RhoField], t_base: float, cell_center: Any
) -> float:
    """t_base rho(x'), clamped below 1/2"""
    return min(t_base * _rho_at(rho, cell_center), MAX_SHAPE_PARAM)


def modulated_frame_area(
    rho: Optional[RhoField], t_base: float, cell_center: Any
) -> float:
    t = modulated_thickness(rho, t_base, cell_center)
    return 4 * t * (1 - t)


def modulated_geometry(
    kind: str, rho: Optional[RhoField], shape_param: float, cell_center: Any
) -> CellGeometry:
    """Local cell geometry of a rho-modulated columnar microstructure"""
    if kind == 'disk':
        return CellGeometry.disk(modulated_radius(rho, shape_param, cell_center))
    if kind == 'frame':
        return CellGeometry.frame(modulated_thickness(rho, shape_param, cell_center))
    raise ValidationError(f'Modulation is defined for disk and frame only, got {kind}')


def macro_phase_indicator(
    kind: str,
    epsilon: float,
    rho: Optional[RhoField],
    shape_param: float,
    x1: Any,
    x2: Any,
) -> np.ndarray:
    """
    Membership of macroscopic points in the inclusion of the eps-periodic,
    rho-modulated microstructure; the shape of each cell is set by rho at its
    centre
    """
    if not epsilon > 0:
        raise ValidationError(f'epsilon must be positive, got {epsilon}')
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    k1 = np.floor(x1 / epsilon)
    k2 = np.floor(x2 / epsilon)
    y1 = x1 / epsilon - k1 - 0.5
    y2 = x2 / epsilon - k2 - 0.5
    if rho is None:
        local_rho = np.ones(np.broadcast(x1, x2).shape)
    else:
        local_rho = rho(epsilon * (k1 + 0.5), epsilon * (k2 + 0.5))
    if kind == 'disk':
        r = np.minimum(shape_param * np.sqrt(local_rho), MAX_SHAPE_PARAM)
        return y1 * y1 + y2 * y2 <= r * r
    if kind == 'frame':
        t = np.minimum(shape_param * local_rho, MAX_SHAPE_PARAM)
        return np.maximum(np.abs(y1), np.abs(y2)) >= 0.5 - t
    raise ValidationError(f'Unknown microstructure kind {kind}')


def local_density(indicator: Any, theta_n: float, window: int) -> np.ndarray:
    """
    Window averages of theta_n^-1 1_{inclusion} over non-overlapping
    window x window blocks of a macroscopic raster
    """
    indicator = np.asarray(indicator, dtype=float)
    ny, nx = indicator.shape
    if window < 1 or ny % window or nx % window:
        raise ValidationError(
            f'Window {window} must divide the raster shape {indicator.shape}'
        )
    if not theta_n > 0:
        raise ValidationError(f'theta_n must be positive, got {theta_n}')
    blocks = indicator.reshape(ny // window, window, nx // window, window)
    return blocks.mean(axis=(1, 3)) / theta_n
