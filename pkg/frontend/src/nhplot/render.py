"""The four figure kinds.

Rendering is a pure function of the CSV contents and the PlotSpec: style
parameters are pinned so regenerating from identical inputs yields an
identical image.
"""

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .reader import PlotDataError, column, read_csv  # noqa: E402

KINDS = ("order", "energy", "ensemble", "integrals")

_STYLE = {
    "figure.figsize": (6.4, 4.8),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "lines.linewidth": 1.4,
}


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    inputs: tuple
    out: str
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotDataError(f"unknown plot kind {self.kind!r}; use one of {KINDS}")
        if not self.inputs:
            raise PlotDataError("at least one input CSV is required")


def render(spec):
    """Write the figure for spec; returns the output path.

    The input is validated before any file is created, so a bad CSV never
    leaves a partial image behind.
    """
    tables = [(path,) + read_csv(path) for path in spec.inputs]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        _DISPATCH[spec.kind](ax, tables)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(spec.out, format="png", metadata={"Software": "nhplot"})
        plt.close(fig)
    return spec.out


def _render_order(ax, tables):
    """Log-log global error against step size, with slope guide lines at the
    predicted exponents read from the CSV."""
    for path, header, data in tables:
        h = column(header, data, "h", path)
        for name, style in (("err_q", "o-"), ("err_p", "s-"), ("err_lambda", "^-")):
            err = column(header, data, name, path)
            ax.loglog(h, err, style, label=name.replace("err_", "error "))
        for pred_name, err_name in (("pred_q", "err_q"), ("pred_p", "err_p"),
                                    ("pred_lambda", "err_lambda")):
            pred = column(header, data, pred_name, path)[0]
            err = column(header, data, err_name, path)
            anchor = err.argmin()
            guide = err[anchor] * (h / h[anchor]) ** pred
            ax.loglog(h, guide, "k--", linewidth=0.8,
                      label=f"slope {pred:g}" if err_name == "err_q" else None)
    ax.set_xlabel("step size h")
    ax.set_ylabel("global error at final time")
    ax.legend(loc="best", fontsize=8)


def _render_energy(ax, tables):
    """Energy traces over time: every E_* column plus a bare energy column."""
    plotted = False
    for path, header, data in tables:
        t = column(header, data, "t", path)
        names = [n for n in header if n.startswith("E_") or n == "energy"]
        if not names:
            raise PlotDataError(f"{path}: no energy columns to plot")
        for name in names:
            ax.plot(t, column(header, data, name, path), label=name)
            plotted = True
    if not plotted:
        raise PlotDataError("nothing to plot")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(loc="best", fontsize=8)


def _render_ensemble(ax, tables):
    """Normalized ensemble energy spread against time."""
    for path, header, data in tables:
        t = column(header, data, "t", path)
        mu = column(header, data, "mu_energy_normalized", path)
        ax.plot(t, mu, label=path.rsplit("/", 1)[-1])
    ax.set_xlabel("t")
    ax.set_ylabel("energy spread / h^(2(2s-2))")
    ax.legend(loc="best", fontsize=8)


def _render_integrals(ax, tables):
    """First-integral error evolution on a log scale."""
    names = ("I_spin", "I_x", "I_y", "E_moving")
    for path, header, data in tables:
        t = column(header, data, "t", path)
        for name in names:
            vals = column(header, data, name, path)
            err = abs(vals - vals[0])
            floor = max(1e-18, err.max() * 1e-12)
            ax.semilogy(t, err + floor, label=f"|{name}(t) - {name}(0)|")
    ax.set_xlabel("t")
    ax.set_ylabel("first-integral error")
    ax.legend(loc="best", fontsize=8)


_DISPATCH = {
    "order": _render_order,
    "energy": _render_energy,
    "ensemble": _render_ensemble,
    "integrals": _render_integrals,
}
