"""Rate-limit-aware social collection daemon with a deterministic platform
simulator and analysis pipelines for malicious-activity exploration.

Subpackages/modules:

- domain: shared record types, config contract, raw-object parsing
- store: document persistence, snapshots, stats log
- netclient: wire client with rate-limit discipline
- simworld / simserver: deterministic synthetic platform + mock API
- scheduler: phased task supervisor, virtual clock, skip/limit batcher
- collector: the collection tasks wired into a run plan
- textprep / pooling: text cleaning and daily document pooling
- topics: online variational LDA and its diagnostics
- embeddings: skip-gram co-occurrence embeddings and evaluation
- clustering: k-means++ with elbow curves and delta tables
- labeling: labeled account-set construction
- activity: daily series, weekday stats, Welch matrices
- service / cli: monitoring HTTP API and the operator CLI
"""

__version__ = "0.1.0"
