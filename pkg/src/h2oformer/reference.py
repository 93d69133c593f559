"""Published ablation numbers, kept as metadata only.

Both evaluation datasets require access agreements, so none of these
values can be regenerated here.  They document what a full-scale run is
measured against; nothing in the package or its tests asserts them.
"""

REPRODUCIBLE = False
REASON = ("iMiGUE and SMG are access-restricted and not bundled; desk-scale runs use the synthetic "
          "micro-gesture set, so published accuracies are reference values only")

# variant -> (accuracy, F1) on each dataset's test split
ABLATION = {
    "iMiGUE": {
        "BL": (0.6200, 0.5625),
        "BL+HG": (0.6400, 0.5682),
        "BL+HG+EH": (0.6400, 0.5500),
        "BL+HG+DB": (0.6500, 0.6337),
        "BL+HG+EH+DB": (0.6700, 0.6327),
        "Masked": (0.6300, 0.6186),
        "Full": (0.7000, 0.7222),
    },
    "SMG": {
        "BL": (0.6316, 0.6462),
        "BL+HG": (0.6760, 0.6667),
        "BL+HG+EH": (0.6842, 0.6774),
        "BL+HG+DB": (0.7193, 0.6957),
        "BL+HG+EH+DB": (0.6842, 0.6866),
        "Masked": (0.7018, 0.7273),
        "Full": (0.7544, 0.7647),
    },
}


def headline(dataset: str) -> tuple[float, float]:
    return ABLATION[dataset]["Full"]
