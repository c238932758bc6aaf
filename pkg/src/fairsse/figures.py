"""CSV tables and matplotlib figures written next to a scenario report."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "figure.figsize": (5, 3),
    "figure.dpi": 120,
    # keep PNG bytes stable across runs
    "svg.hashsalt": "fairsse",
}


def write_sessions_csv(report: dict, path) -> Path:
    path = Path(path)
    rows = report.get("sessions", [])
    parties = sorted({p for r in rows for p in r.get("balance_delta", {})})
    cols = [c for c in ("session_id", "adversary", "terminal_state", "settlement", "dispute_step", "correct") if any(c in r for r in rows)]
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(cols + [f"delta_{p}" for p in parties])
        for r in rows:
            deltas = r.get("balance_delta", {})
            out.writerow([r.get(c, "") for c in cols] + [deltas.get(p, 0) for p in parties])
    return path


def write_profile_csv(profile: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["query", "blocks", "entries"])
        for q in profile["queries"]:
            out.writerow([q["query"], q["blocks"], q["entries"]])
    return path


def plot_access_profile(profile: dict, path, title: str = "Observed result sizes") -> Path:
    queries = profile["queries"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar([str(q["query"]) for q in queries], [q["entries"] for q in queries], color="tab:red")
        ax.set_xlabel("query")
        ax.set_ylabel(f"payload entries (p={profile['block_size']})")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def plot_costs(costs: dict[str, dict], path) -> Path:
    """Side-by-side stored bytes and contract steps for each labelled run."""
    labels = list(costs)
    with plt.rc_context({**STYLE, "figure.figsize": (6, 3)}):
        fig, (ax1, ax2) = plt.subplots(1, 2)
        ax1.bar(labels, [costs[k]["replicated_storage_bytes"] for k in labels], color="tab:blue")
        ax1.set_ylabel("ledger bytes x miners")
        ax1.set_yscale("log")
        ax2.bar(labels, [costs[k]["replicated_contract_steps"] for k in labels], color="tab:orange")
        ax2.set_ylabel("contract steps x miners")
        ax2.set_yscale("log")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def plot_balance_deltas(report: dict, path) -> Path:
    rows = report.get("sessions", [])
    parties = sorted({p for r in rows for p in r.get("balance_delta", {})})
    with plt.rc_context({**STYLE, "figure.figsize": (6, 3)}):
        fig, ax = plt.subplots()
        width = 0.8 / max(len(parties), 1)
        for k, party in enumerate(parties):
            xs = [i + k * width for i in range(len(rows))]
            ax.bar(xs, [r["balance_delta"].get(party, 0) for r in rows], width, label=party)
        ax.axhline(0, color="black", linewidth=0.5)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(rows))])
        ax.set_xticklabels([r["session_id"] for r in rows], rotation=45, ha="right")
        ax.set_ylabel("net token change")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def write_report_artifacts(report: dict, directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_sessions_csv(report, out / "sessions.csv")]
    leak = report.get("leakage", {})
    for view in ("ledger_view", "server_view"):
        if view in leak and leak[view]["queries"]:
            written.append(write_profile_csv(leak[view]["access_pattern"], out / f"{view}_profile.csv"))
            written.append(plot_access_profile(leak[view]["access_pattern"], out / f"{view}_profile.png", view.replace("_", " ")))
    costs = {report["framework"]: report["cost"]}
    if "baseline_cost" in report:
        costs = {"baseline-onchain": report["baseline_cost"], **costs}
    written.append(plot_costs(costs, out / "costs.png"))
    if report.get("sessions"):
        written.append(plot_balance_deltas(report, out / "balances.png"))
    return written
