"""Plain-text predictor serialization (labeled matrices, no binary).

Format: a header line, ``int/float/str NAME VALUE`` scalar lines, and
``matrix NAME ROWS COLS`` blocks followed by one whitespace-separated row
per line, terminated by ``end``.  Floats are written with ``repr`` so a
round trip is bit-exact.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DomainError
from .hankel import HankelSet
from .predictors import (ArxModel, GammaBlocks, GammaDdpcPredictor,
                         InnoPrePredictor, KfPrePredictor, Predictor,
                         ProjRegPredictor, SplitPredictor, _AffinePredictor)

_HEADER = "innodpc-predictor v1"


class LoadedAffinePredictor(_AffinePredictor):
    """Affine predictor restored from disk; behaves like the original for
    prediction and control."""

    def __init__(self, kind, Lp, Lf, n_u, n_y, past_map, input_map):
        super().__init__(Lp, Lf, n_u, n_y, past_map, input_map)
        self.kind = kind


def _arx_payload(arx: ArxModel, out: dict):
    out["int rho"] = arx.rho
    out["int include_lag0"] = int(arx.include_lag0)
    out["matrix arx_cy"] = np.vstack(arx.coeff_y) if arx.rho else np.zeros((0, arx.n_y))
    out["matrix arx_cu"] = np.vstack(arx.coeff_u)


def _arx_from_payload(p: dict, n_u: int, n_y: int) -> ArxModel:
    rho = p["rho"]
    cy = p["arx_cy"]
    cu = p["arx_cu"]
    coeff_y = [cy[i * n_y:(i + 1) * n_y] for i in range(rho)]
    coeff_u = [cu[i * n_y:(i + 1) * n_y] for i in range(rho + 1)]
    return ArxModel(rho=rho, include_lag0=bool(p["include_lag0"]),
                    coeff_y=coeff_y, coeff_u=coeff_u,
                    residuals=np.zeros((0, n_y)), n_u=n_u, n_y=n_y)


def _payload(pred: Predictor) -> dict:
    out = {"str kind": pred.kind, "int Lp": pred.Lp, "int Lf": pred.Lf,
           "int n_u": pred.n_u, "int n_y": pred.n_y}
    if isinstance(pred, (ProjRegPredictor, SplitPredictor)):
        h = pred.h
        out["matrix Up"], out["matrix Yp"] = h.Up, h.Yp
        out["matrix Uf"], out["matrix Yf"] = h.Uf, h.Yf
        if isinstance(pred, ProjRegPredictor):
            out["float lam"] = pred.lam
        else:
            out["float lam1"], out["float lam2"] = pred.lam1, pred.lam2
    elif isinstance(pred, GammaDdpcPredictor):
        b = pred.b
        out["float beta2"], out["float beta3"] = pred.beta2, pred.beta3
        out["int n_cols"] = b.n_cols
        for name in ("L11", "L21", "L22", "L31", "L32", "L33",
                     "Q1", "Q2", "Q3"):
            out[f"matrix {name}"] = getattr(b, name)
    else:
        out["matrix past_map"] = pred.past_map
        out["matrix input_map"] = pred.input_map
        if isinstance(pred, (InnoPrePredictor, KfPrePredictor)):
            if pred.arx is None:
                raise DomainError(
                    f"{pred.kind} predictor without its ARX model cannot be "
                    f"serialized for online reuse")
            _arx_payload(pred.arx, out)
    return out


def save_predictor(pred: Predictor, path) -> None:
    """Write a predictor to a labeled-matrix text file."""
    payload = _payload(pred)
    lines = [_HEADER]
    for key, value in payload.items():
        tag, name = key.split(" ", 1)
        if tag == "matrix":
            m = np.atleast_2d(np.asarray(value, dtype=np.float64))
            lines.append(f"matrix {name} {m.shape[0]} {m.shape[1]}")
            for row in m:
                lines.append(" ".join(repr(float(v)) for v in row))
        else:
            lines.append(f"{tag} {name} {value}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_predictor(path) -> Predictor:
    """Restore a predictor saved by :func:`save_predictor`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _HEADER:
        raise DomainError(f"{path}: not a predictor file (bad header)")
    vals: dict = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if line == "end":
            break
        tag, rest = line.split(" ", 1)
        if tag == "matrix":
            name, rows, cols = rest.rsplit(" ", 2)
            rows, cols = int(rows), int(cols)
            data = [np.array(lines[i + r].split(), dtype=np.float64)
                    for r in range(rows)]
            i += rows
            vals[name] = (np.vstack(data).reshape(rows, cols) if rows
                          else np.zeros((0, cols)))
        elif tag == "int":
            name, v = rest.rsplit(" ", 1)
            vals[name] = int(v)
        elif tag == "float":
            name, v = rest.rsplit(" ", 1)
            vals[name] = float(v)
        elif tag == "str":
            name, v = rest.split(" ", 1)
            vals[name] = v
        else:
            raise DomainError(f"{path}: unknown line tag {tag!r}")
    kind = vals["kind"]
    dims = (vals["Lp"], vals["Lf"], vals["n_u"], vals["n_y"])
    if kind in ("DeePC-projreg", "DeePC-split"):
        Lp, Lf, n_u, n_y = dims
        h = HankelSet(Lp=Lp, Lf=Lf, n_u=n_u, n_y=n_y,
                      n_cols=vals["Up"].shape[1],
                      Up=vals["Up"], Yp=vals["Yp"], Uf=vals["Uf"],
                      Yf=vals["Yf"])
        if kind == "DeePC-projreg":
            return ProjRegPredictor(h, vals["lam"])
        return SplitPredictor(h, vals["lam1"], vals["lam2"])
    if kind == "GammaDDPC":
        Lp, Lf, n_u, n_y = dims
        blocks = GammaBlocks(Lp=Lp, Lf=Lf, n_u=n_u, n_y=n_y,
                             n_cols=vals["n_cols"],
                             **{k: vals[k] for k in
                                ("L11", "L21", "L22", "L31", "L32", "L33",
                                 "Q1", "Q2", "Q3")})
        return GammaDdpcPredictor(blocks, vals["beta2"], vals["beta3"])
    if kind in ("InnoPre", "KFPre"):
        cls = InnoPrePredictor if kind == "InnoPre" else KfPrePredictor
        pred = object.__new__(cls)
        Predictor.__init__(pred, *dims)
        pred.past_map = vals["past_map"]
        pred.input_map = vals["input_map"]
        pred.arx = _arx_from_payload(vals, dims[2], dims[3])
        if kind == "InnoPre":
            pred.reduce = True
        return pred
    return LoadedAffinePredictor(kind, *dims, vals["past_map"],
                                 vals["input_map"])
