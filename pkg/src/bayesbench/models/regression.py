"""Bayesian logistic regression and robust (Student-t) regression."""

from __future__ import annotations

import numpy as np

from .. import distributions as dist
from .base import Dataset, Model, ModelInstance, ParamSpec

ALPHA_SCALE = 10.0
BETA_SCALE = 2.5
X_SCALE = 10.0
NU_SHAPE, NU_RATE = 2.0, 10.0
SIGMA_RATE = 1.0


def _sample_covariates(rng, n, k):
    return dist.sample_normal(rng, 0.0, X_SCALE, size=(n, k))


class LogisticRegression(Model):
    kind = "logistic_regression"
    config_keys = ("n_train", "n_test", "k_covariates")

    def layout(self, instance):
        k = instance.config.k_covariates
        return [ParamSpec("alpha", (), "real"), ParamSpec("beta", (k,), "real")]

    def sample_prior(self, instance, rng):
        k = instance.config.k_covariates
        return {
            "alpha": np.asarray(dist.sample_normal(rng.derive("alpha"), 0.0, ALPHA_SCALE)),
            "beta": dist.sample_normal(rng.derive("beta"), 0.0, BETA_SCALE, size=k),
        }

    def instantiate(self, config, rng):
        config = config.resolved()
        return ModelInstance(config, self.sample_prior(_stub(config), rng))

    def simulate(self, instance, rng):
        cfg = instance.config
        return Dataset(
            train=self._simulate_block(instance, rng.derive("train"), cfg.n_train),
            test=self._simulate_block(instance, rng.derive("test"), cfg.n_test),
        )

    def _simulate_block(self, instance, rng, n):
        x = _sample_covariates(rng.derive("X"), n, instance.config.k_covariates)
        mu = self._linear(instance.ground_truth, x)
        p = np.exp(dist.log_sigmoid(mu))
        y = (dist.sample_uniform(rng.derive("Y"), n) < p).astype(np.int64)
        return {"X": x, "Y": y}

    @staticmethod
    def _linear(point, x):
        return float(point["alpha"]) + x @ np.asarray(point["beta"], dtype=float)

    def log_prior(self, instance, point):
        return float(dist.log_pdf_normal(point["alpha"], 0.0, ALPHA_SCALE)
                     + np.sum(dist.log_pdf_normal(point["beta"], 0.0, BETA_SCALE)))

    def log_likelihood(self, instance, block, point):
        mu = self._linear(point, block["X"])
        y = block["Y"]
        # log p(y | mu) = log_sigmoid(mu) for y=1, log_sigmoid(-mu) for y=0
        return float(np.sum(dist.log_sigmoid(np.where(y == 1, mu, -mu))))

    def block_from_json(self, obj):
        return {"X": np.asarray(obj["X"], dtype=float).reshape(len(obj["Y"]), -1),
                "Y": np.asarray(obj["Y"], dtype=np.int64)}


class RobustRegression(LogisticRegression):
    kind = "robust_regression"
    config_keys = ("n_train", "n_test", "k_covariates")

    def layout(self, instance):
        return super().layout(instance) + [
            ParamSpec("nu", (), "positive"),
            ParamSpec("sigma", (), "positive"),
        ]

    def sample_prior(self, instance, rng):
        point = super().sample_prior(instance, rng)
        point["nu"] = np.asarray(dist.sample_gamma(rng.derive("nu"), NU_SHAPE, NU_RATE))
        point["sigma"] = np.asarray(dist.sample_exponential(rng.derive("sigma"), SIGMA_RATE))
        return point

    def _simulate_block(self, instance, rng, n):
        gt = instance.ground_truth
        x = _sample_covariates(rng.derive("X"), n, instance.config.k_covariates)
        mu = self._linear(gt, x)
        noise_rng = rng.derive("Y")
        sigma, nu = float(gt["sigma"]), float(gt["nu"])
        with np.errstate(over="ignore", invalid="ignore"):
            y = mu + sigma * dist.sample_student_t(noise_rng, nu, size=n)
            # tiny nu can overflow a draw; redraw those coordinates
            while not np.all(np.isfinite(y)):
                bad = ~np.isfinite(y)
                y[bad] = mu[bad] + sigma * dist.sample_student_t(noise_rng, nu, size=int(bad.sum()))
        return {"X": x, "Y": y}

    def log_prior(self, instance, point):
        return (super().log_prior(instance, point)
                + float(dist.log_pdf_gamma(point["nu"], NU_SHAPE, NU_RATE))
                + float(dist.log_pdf_exponential(point["sigma"], SIGMA_RATE)))

    def log_likelihood(self, instance, block, point):
        mu = self._linear(point, block["X"])
        return float(np.sum(dist.logpdf_student_t(block["Y"], float(point["nu"]), mu,
                                                  float(point["sigma"]))))

    def block_from_json(self, obj):
        return {"X": np.asarray(obj["X"], dtype=float).reshape(len(obj["Y"]), -1),
                "Y": np.asarray(obj["Y"], dtype=float)}


def _stub(config):
    return ModelInstance(config, {})
