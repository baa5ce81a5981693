"""Estimator-style wrapper around the profile planner.

`SpeedDensityPlanner` exposes the planner through the familiar
fit/predict interface: ``fit(tube)`` solves the optimization for that
tube, ``predict(l)`` evaluates the planned speed and density at arc
lengths ``l``.  Hyper-parameters are flat keyword arguments so
``get_params`` / ``set_params`` and ``clone`` work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .planner import PlannerConfig, plan, validate_plan
from .swarm import SwarmParams
from .tube import VirtualTube
from .validation import as_arc_lengths


class SpeedDensityPlanner(BaseEstimator):
    """Plan a forward-speed / density profile for a swarm in a tube.

    Parameters mirror `SwarmParams` and `PlannerConfig`; see those for
    semantics.  After `fit` the solved profile is available as
    ``profile_`` and the dense-grid constraint check as ``report_``.

    Examples
    --------
    >>> tube = VirtualTube.chain([0, 0], [1, 0], [("straight", 50.0)],
    ...                          [(0.0, 5.0), (50.0, 5.0)])
    >>> est = SpeedDensityPlanner(boundary_speed=5.0, boundary_density=0.1989)
    >>> vr = est.fit(tube).predict([0.0, 25.0, 50.0])
    >>> vr.shape
    (3, 2)
    """

    def __init__(self, n_robots=20, v_min=2.0, v_max=5.0, a_v=1.0, a_n=1.0,
                 r_p=0.3, r_s=0.4, r_a=0.8, rho_d=0.1989, rho_max=None,
                 r_a_max=None, k_ra=2.0, k_m=2.5, k_xy=4.0,
                 segment_count=6, collocation_count=25, delta_l=None,
                 rho_rate_limit=None, tolerance=1e-6, max_iterations=40,
                 boundary_speed=None, boundary_density=None,
                 density_prediction="window", rho_floor=1e-4, seed=0):
        self.n_robots = n_robots
        self.v_min = v_min
        self.v_max = v_max
        self.a_v = a_v
        self.a_n = a_n
        self.r_p = r_p
        self.r_s = r_s
        self.r_a = r_a
        self.rho_d = rho_d
        self.rho_max = rho_max
        self.r_a_max = r_a_max
        self.k_ra = k_ra
        self.k_m = k_m
        self.k_xy = k_xy
        self.segment_count = segment_count
        self.collocation_count = collocation_count
        self.delta_l = delta_l
        self.rho_rate_limit = rho_rate_limit
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.boundary_speed = boundary_speed
        self.boundary_density = boundary_density
        self.density_prediction = density_prediction
        self.rho_floor = rho_floor
        self.seed = seed

    def _swarm_params(self):
        return SwarmParams(
            n_robots=self.n_robots, v_min=self.v_min, v_max=self.v_max,
            a_v=self.a_v, a_n=self.a_n, r_p=self.r_p, r_s=self.r_s,
            r_a=self.r_a, rho_d=self.rho_d, rho_max=self.rho_max,
            r_a_max=self.r_a_max, k_ra=self.k_ra, k_m=self.k_m,
            k_xy=self.k_xy)

    def _planner_config(self):
        return PlannerConfig(
            segment_count=self.segment_count,
            collocation_count=self.collocation_count, delta_l=self.delta_l,
            rho_rate_limit=self.rho_rate_limit, tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            boundary_speed=self.boundary_speed,
            boundary_density=self.boundary_density,
            density_prediction=self.density_prediction,
            rho_floor=self.rho_floor, seed=self.seed)

    def fit(self, X, y=None):
        """Solve the profile for tube `X` (`y` is ignored)."""
        if not isinstance(X, VirtualTube):
            raise TypeError("fit expects a VirtualTube")
        params = self._swarm_params()
        config = self._planner_config()
        self.tube_ = X
        self.profile_ = plan(X, params, config)
        self.report_ = validate_plan(self.profile_, X, params, config)
        self.objective_ = self.profile_.diagnostics["objective"]
        return self

    def predict(self, l):
        """Planned (speed, density) at arc lengths `l`, shape (n, 2)."""
        check_is_fitted(self, "profile_")
        l = as_arc_lengths(l, self.tube_.total_length, "l")
        v, rho = self.profile_.evaluate(l)
        return np.column_stack([np.atleast_1d(v), np.atleast_1d(rho)])

    def transform(self, l):
        """Alias for `predict` so the class drops into transformer slots."""
        return self.predict(l)
