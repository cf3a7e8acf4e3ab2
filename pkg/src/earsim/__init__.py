"""Agreement analysis between single-channel in-ear EEG and PSG sleep recordings.

Two complementary tracks:

* hypnogram track: scorer reliability (soft-agreement), majority-vote consensus
  per source, stage intersection between sources, and Cohen's-kappa variability,
* feature track: 45 per-epoch signal features, redundancy-based feature
  selection per channel pair, and a density-level similarity index built from
  Jensen-Shannon divergence.

The `earsim` CLI drives both tracks plus a synthetic recording generator used
for end-to-end validation.
"""

__version__ = "0.1.0"
