"""Frozen simulation ground-truth constants.

Generated by scripts/freeze_oracles.py; do not edit by hand. Each entry
records the Monte-Carlo draw count and master seed that produced it.
"""

FROZEN_EFFECTS = {
    "binary-weak-d1-inter-pareto5|tau=0.95": {
        "qte": 2.601622299090475, "wqte_overlap": 2.4115102719067725,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-weak-d1-inter-pareto5|tau=0.99": {
        "qte": 3.205346608301067, "wqte_overlap": 2.9880504056433947,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-weak-d1-inter-pareto7|tau=0.95": {
        "qte": 2.6251358238840994, "wqte_overlap": 2.4362401959315694,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-weak-d1-inter-pareto7|tau=0.99": {
        "qte": 3.283703043540471, "wqte_overlap": 3.0651563822145045,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-weak-d1-inter-pareto10|tau=0.95": {
        "qte": 2.6350251236298834, "wqte_overlap": 2.4475775334722476,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-weak-d1-inter-pareto10|tau=0.99": {
        "qte": 3.309323536898341, "wqte_overlap": 3.0934719029827544,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto5|tau=0.95": {
        "qte": 2.601622299090475, "wqte_overlap": 1.838231102335707,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto5|tau=0.99": {
        "qte": 3.205346608301067, "wqte_overlap": 2.218857492464867,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto7|tau=0.95": {
        "qte": 2.6251358238840994, "wqte_overlap": 1.8709809969016185,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto7|tau=0.99": {
        "qte": 3.283703043540471, "wqte_overlap": 2.329633947024529,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto10|tau=0.95": {
        "qte": 2.6350251236298834, "wqte_overlap": 1.887720150583927,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
    "binary-strong-d1-inter-pareto10|tau=0.99": {
        "qte": 3.309323536898341, "wqte_overlap": 2.370685121342988,
        "method": "mc", "n_mc": 2000000, "seed": 31415,
    },
}
