import json
import logging
import os
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigError, ParseError
from .manifold import ManifoldConfig
from .tensor import json_number, parse_json_number

logger = logging.getLogger(__name__)

SUITES = ('oracle', 'symmetric', 'geodesic', 'weyl', 'certificates', 'alpha', 'classification', 'isometry')


@dataclass(frozen=True)
class InstanceSpec:
    name: str
    config: ManifoldConfig
    points: Tuple[Tuple, ...] = ()
    suites: Tuple[str, ...] = SUITES

    @property
    def p(self) -> int:
        return self.config.p

    @classmethod
    def from_json(cls, data: Dict[str, Any], source: Optional[str] = None) -> 'InstanceSpec':
        if not isinstance(data, dict):
            raise ConfigError("Instance must be a JSON object", source=source)
        config = ManifoldConfig.from_json(data)
        name = data.get('name') or (os.path.splitext(os.path.basename(source))[0] if source else 'instance')
        points = []
        for i, point in enumerate(data.get('points') or []):
            if not isinstance(point, list) or len(point) != config.dimension:
                raise ConfigError(f"Point {i} needs {config.dimension} coordinates", source=source)
            points.append(tuple(parse_json_number(v) for v in point))
        suites = tuple(data.get('suites') or SUITES)
        unknown = sorted(set(suites) - set(SUITES))
        if unknown:
            raise ConfigError(f"Unknown suites: {', '.join(unknown)}", source=source)
        return cls(str(name), config, tuple(points), suites)

    def to_json(self) -> Dict[str, Any]:
        payload = {'name': self.name}
        payload.update(self.config.to_json())
        if self.points:
            payload['points'] = [[json_number(v) for v in point] for point in self.points]
        if self.suites != SUITES:
            payload['suites'] = list(self.suites)
        return payload


# built-in presets

EXPONENTIALS = {
    'exp': '(exp z0)',
    'exp2': '(+ (exp z0) (exp (* 2 z0)))',
}


def plane_wave_terms(k: int) -> List[str]:
    """z_1 z_0^2 + ... + z_k z_0^(k+1) as s-expression terms"""
    return [f'(* z{j} (^ z0 {j + 1}))' for j in range(1, k + 1)]


def _sum(terms: List[str]) -> str:
    if not terms:
        return '0'
    if len(terms) == 1:
        return terms[0]
    return '(+ ' + ' '.join(terms) + ')'


def homogeneity_function(p: int, k: int) -> str:
    """f_k: k <= p plane-wave terms; k = p+1, p+2 add z0^(p+3) or exp(z0)"""
    if not 1 <= k <= p + 2:
        raise ConfigError(f"H presets need 1 <= k <= {p + 2}, got {k}")
    if k <= p:
        return _sum(plane_wave_terms(k))
    psi = f'(^ z0 {p + 3})' if k == p + 1 else '(exp z0)'
    return _sum(plane_wave_terms(p) + [psi])


def presets(p: int) -> Dict[str, InstanceSpec]:
    n = 6 + 4 * p
    table = {f'S_{n}': InstanceSpec(f'S_{n}', ManifoldConfig.from_sexpr(p, '0'))}
    for k in range(1, p + 3):
        name = f'H_{n}_{k}'
        table[name] = InstanceSpec(name, ManifoldConfig.from_sexpr(p, homogeneity_function(p, k)))
    for label, psi in EXPONENTIALS.items():
        name = f'N_{n}_{label}'
        table[name] = InstanceSpec(name, ManifoldConfig.from_sexpr(p, _sum(plane_wave_terms(p) + [psi])))
    return table


def all_presets(max_p: int = 3) -> Dict[str, InstanceSpec]:
    table = {}
    for p in range(1, max_p + 1):
        table.update(presets(p))
    return table


_PRESET_NAME = re.compile(r'^[SHN]_\d+(_\w+)?$')


def _json_error_position(error: json.JSONDecodeError) -> Tuple[int, int]:
    return error.lineno, error.colno


def load_instance(reference: str) -> InstanceSpec:
    """A path to an instance JSON file, or a preset name such as H_10_1"""
    if os.path.exists(reference):
        with open(reference, 'r', encoding='utf-8') as handle:
            text = handle.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            line, column = _json_error_position(e)
            raise ParseError(f"Invalid JSON in {reference}: {e.msg}", line, column, source=reference) from e
        return InstanceSpec.from_json(data, source=reference)

    name = os.path.splitext(os.path.basename(reference))[0]
    if _PRESET_NAME.match(name):
        table = all_presets()
        if name in table:
            logger.debug("using preset %s", name)
            return table[name]
    raise ConfigError(f"'{reference}' is neither an instance file nor a preset", reference=reference)


def write_instance(spec: InstanceSpec, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f'{spec.name}.json')
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(spec.to_json(), handle, indent=2)
        handle.write('\n')
    return path
