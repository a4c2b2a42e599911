#!/usr/bin/env python3
"""Freezes a 10-step scalar AdamW trajectory computed by torch.optim.AdamW
at float64 into tests/fixtures/adamw_trace.json. Independent oracle for the
optimizer tests."""

import json
import math

import torch


def main():
    lr, beta1, beta2, eps, weight_decay = 0.01, 0.9, 0.999, 1e-8, 0.01
    theta = torch.tensor([0.5], dtype=torch.float64, requires_grad=True)
    opt = torch.optim.AdamW(
        [theta], lr=lr, betas=(beta1, beta2), eps=eps, weight_decay=weight_decay
    )
    grads = [math.sin(t + 1.0) for t in range(10)]
    thetas = []
    for g in grads:
        opt.zero_grad()
        theta.grad = torch.tensor([g], dtype=torch.float64)
        opt.step()
        thetas.append(theta.item())

    out = {
        "theta0": 0.5,
        "lr": lr,
        "beta1": beta1,
        "beta2": beta2,
        "eps": eps,
        "weight_decay": weight_decay,
        "grads": grads,
        "thetas": thetas,
    }
    with open("tests/fixtures/adamw_trace.json", "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
    print("\n".join(f"{g:+.6f} -> {t:.12f}" for g, t in zip(grads, thetas)))


if __name__ == "__main__":
    main()
