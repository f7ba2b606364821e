"""Pipeline configuration: every tunable constant in one flat record.

Configs persist as plain ``key=value`` text so a run can be reproduced from
its sidecar file alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class Config:
    # superpixels
    n_segments: int = 200
    compactness: float = 10.0
    # regional feature bandwidths
    sigma_spatial: float = 0.25       # centroid-distance weighting (contrast)
    sigma_appearance: float = 0.25    # appearance weighting (spatial spread)
    sigma_ranking: float = 0.1        # manifold-ranking affinity
    ranking_alpha: float = 0.99       # manifold-ranking propagation
    sigma_geodesic: float = 0.25      # geodesic softness (boundary connectivity)
    sigma_boundary: float = 1.0       # boundary-connectivity squashing
    clamp_eps: float = 1e-3           # saliency clamp before log transforms
    # smoothness / rendering
    sigma_color: float = 0.25         # edge-weight bandwidth in normalized Lab
    gamma: float = 10.0               # diffusion strength
    # training
    lam: float = 1e-2
    max_iters: int = 200
    tol: float = 1e-4
    optimizer: str = "bundle"         # or "subgradient"
    seed: int = 0
    # chi-square feature map
    chi2: bool = False
    chi2_order: int = 2
    chi2_period: float = 0.6

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        casts = {"int": int, "float": float, "str": str,
                 "bool": lambda s: s.lower() in ("1", "true", "yes")}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kwargs[key] = casts[types[key]](value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())
