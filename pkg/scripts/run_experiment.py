#!/usr/bin/env python3
"""End-to-end smoothing experiment on the shipped cloudy-day fixture.

Runs the closed loop, prints the headline numbers, and leaves the full
artifact set (traces, metrics, histogram, frame log) in ./results/ for
plotting. Pass a different scenario file as the first argument to rerun
another configuration.
"""

import sys
from pathlib import Path

from pvsmooth.config import load_scenario
from pvsmooth.run import resolve_source, run_scenario

REPO = Path(__file__).resolve().parents[1]


def main() -> None:
    scenario = Path(sys.argv[1]) if len(sys.argv) > 1 else REPO / "scenarios" / "qualitative_smoothing.json"
    out_dir = REPO / "results" / scenario.stem

    cfg, source = load_scenario(scenario)
    series = resolve_source(source, cfg)
    art = run_scenario(cfg, series, out_dir, source=source)

    raw, smooth = art.raw_report, art.smoothed_report
    post = art.smoothed_report_postwarmup
    print(f"scenario           {scenario.name} (config {art.config_digest[:12]})")
    print(f"input              {len(series)} samples @ {series.sample_period_s} s, "
          f"rated {series.rated_power_w:.0f} W")
    print(f"raw max |RR|       {raw.max_abs_rr:7.2f} %/min   "
          f"violations {raw.violation_count:4d} / {raw.rr_pct_per_min.size}")
    print(f"smoothed max |RR|  {smooth.max_abs_rr:7.2f} %/min   "
          f"violations {smooth.violation_count:4d} (incl. warm-up)")
    print(f"                   {post.max_abs_rr:7.2f} %/min   "
          f"violations {post.violation_count:4d} (excl. warm-up)")
    print(f"soc                {art.soc.soc_min:.3f} .. {art.soc.soc_max:.3f}, "
          f"final {art.soc.soc_final:.3f}, clamp events {art.soc.clamp_events}")
    print(f"artifacts          {out_dir}")


if __name__ == "__main__":
    main()
