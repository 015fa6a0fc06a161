import numpy as np
from scipy import stats

GENRES = ["LATIN", "JAZZ", "BLUES", "COUNTRY", "RAP", "OPERA"]
PREDICTORS = [
    ("EDUC", "Education"),
    ("INCOME", "Income per capita"),
    ("PRESTIGE", "Occupational prestige"),
]


def run_analysis(data):
    df = data.copy()
    df = df[df["PRESTIGE"] > 0]
    y = df[GENRES].isin([4, 5]).sum(axis=1).astype(float)
    X = df[[c for c, _ in PREDICTORS]].astype(float)
    Z = (X - X.mean()) / X.std()
    zy = (y - y.mean()) / y.std()
    n, k = Z.shape
    beta, *_ = np.linalg.lstsq(Z.to_numpy(), zy.to_numpy(), rcond=None)
    resid = zy.to_numpy() - Z.to_numpy() @ beta
    r2 = 1 - (resid @ resid) / (n - 1)
    b = beta * y.std() / X.std().to_numpy()
    cells = [
        {"variable": label, "estimate": float(beta[j]), "stars": 3 if abs(beta[j]) > 0.25 else 1}
        for j, (_, label) in enumerate(PREDICTORS)
    ]
    return {
        "kind": "regression_table",
        "models": [{
            "label": "Model 1",
            "n": int(n),
            "r2": float(r2),
            "adj_r2": float(1 - (1 - r2) * (n - 1) / (n - k - 1)),
            "constant": float(y.mean() - b @ X.mean().to_numpy()),
            "cells": cells,
        }],
    }
