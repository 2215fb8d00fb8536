import numpy as np
from scipy.optimize import nnls

from affine_fence.core.config import config
from affine_fence.core.linalg import as_matrix, as_vector
from affine_fence.core.logger import logger
from affine_fence.schemas.qp_schemas import (
    BiasFeasibility,
    LeastDistanceQp,
    QpSolution,
    QpStatusEnum,
)
from affine_fence.services.exceptions import DimensionMismatchError

# 1 - c^T y below this marks the NNLS residual as zero (incompatible system)
INFEASIBILITY_GAP = 1e-12


def get_qp_solver_service(
    tolerance: float | None = None, max_iter: int | None = None
) -> "QpSolverService":
    return QpSolverService(
        tolerance=config.qp_tolerance if tolerance is None else tolerance,
        max_iter=config.qp_max_iter if max_iter is None else max_iter,
    )


class QpSolverService:
    """Represents a service for least-distance programs min ||u||^2 s.t. A u >= c.

    The program is solved through its non-negative least-squares dual
    (Lawson-Hanson active set): with E = [A^T; c^T] and f = e_last, the NNLS
    solution y gives u = A^T y / (1 - c^T y), and a zero residual certifies
    infeasibility with y itself as the Farkas vector. The iterate is then
    polished by Hildreth coordinate ascent on the dual multipliers.
    """

    def __init__(self, tolerance: float = 1e-10, max_iter: int = 100_000) -> None:
        self._tolerance = tolerance
        self._max_iter = max_iter

    @staticmethod
    def build_neuron_qp(
        w, b: float, propagated_vertices, signs_per_vertex, delta: float
    ) -> LeastDistanceQp:
        """Constraints s_j ((w + dw)^T v_j + (b + db)) >= delta on u = (dw, db).

        Args:
            w (array-like): Current weight row of the neuron.
            b (float): Current bias of the neuron.
            propagated_vertices (array-like): Stacked layer inputs, one row
                per vertex of every region.
            signs_per_vertex (array-like): Required sign for each row.
            delta (float): Margin.

        Raises:
            DimensionMismatchError: If the shapes do not line up.

        Returns:
            LeastDistanceQp: Row j is s_j (v_j, 1), rhs
            delta - s_j (w^T v_j + b).
        """
        w = as_vector(w, "neuron weights")
        vertices = as_matrix(propagated_vertices, "propagated vertices")
        signs = as_vector(signs_per_vertex, "vertex signs")
        if vertices.shape[1] != w.shape[0]:
            raise DimensionMismatchError("vertex dimension", w.shape[0], vertices.shape[1])
        if signs.shape[0] != vertices.shape[0]:
            raise DimensionMismatchError("vertex signs", vertices.shape[0], signs.shape[0])

        augmented = np.hstack([vertices, np.ones((vertices.shape[0], 1))])
        return LeastDistanceQp(
            constraint_matrix=signs[:, None] * augmented,
            constraint_rhs=delta - signs * (vertices @ w + b),
        )

    @staticmethod
    def _unique_rows(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        _, first_index = np.unique(
            np.column_stack([matrix, rhs]), axis=0, return_index=True
        )
        return np.sort(first_index)

    @staticmethod
    def _residual(matrix: np.ndarray, rhs: np.ndarray, u: np.ndarray) -> float:
        return float(max(0.0, np.max(rhs - matrix @ u)))

    @staticmethod
    def _refine_on_active_set(
        matrix: np.ndarray, rhs: np.ndarray, multipliers: np.ndarray
    ) -> np.ndarray | None:
        active = multipliers > 0.0
        if not np.any(active):
            return None
        rows = matrix[active]
        gram = rows @ rows.T
        try:
            refined = np.linalg.solve(gram, rhs[active])
        except np.linalg.LinAlgError:
            return None
        if np.any(refined < 0.0):
            return None
        candidate = np.zeros_like(multipliers)
        candidate[active] = refined
        return candidate

    def _hildreth(
        self,
        matrix: np.ndarray,
        rhs: np.ndarray,
        multipliers: np.ndarray,
        tol: float,
        max_iter: int,
    ) -> tuple[np.ndarray, np.ndarray, int]:
        norms = np.einsum("ij,ij->i", matrix, matrix)
        usable = norms > 0.0
        u = matrix.T @ multipliers
        for sweep in range(1, max_iter + 1):
            largest_step = 0.0
            for j in np.flatnonzero(usable):
                step = (rhs[j] - matrix[j] @ u) / norms[j]
                updated = max(0.0, multipliers[j] + step)
                change = updated - multipliers[j]
                if change != 0.0:
                    u += change * matrix[j]
                    multipliers[j] = updated
                    largest_step = max(largest_step, abs(change) * np.sqrt(norms[j]))
            if largest_step <= tol and self._residual(matrix, rhs, u) <= tol:
                return u, multipliers, sweep
        return u, multipliers, max_iter

    def solve_least_distance(
        self, qp: LeastDistanceQp, tol: float | None = None, max_iter: int | None = None
    ) -> QpSolution:
        """Minimal-norm u with A u >= c.

        Args:
            qp (LeastDistanceQp): The program.
            tol (float | None, optional): Feasibility tolerance. Defaults to
                the service tolerance.
            max_iter (int | None, optional): Iteration budget. Defaults to
                the service budget.

        Returns:
            QpSolution: ``optimal`` with KKT multipliers, ``infeasible`` with a
            certificate y >= 0 (A^T y = 0, c^T y > 0), or ``iteration_limit``
            with the best iterate.
        """
        tol = self._tolerance if tol is None else tol
        max_iter = self._max_iter if max_iter is None else max_iter
        full_matrix, full_rhs = qp.constraint_matrix, qp.constraint_rhs
        rows = self._unique_rows(full_matrix, full_rhs)
        matrix, rhs = full_matrix[rows], full_rhs[rows]
        num_vars = matrix.shape[1]

        def expand(values: np.ndarray) -> np.ndarray:
            full = np.zeros(full_matrix.shape[0])
            full[rows] = values
            return full

        if np.max(rhs) <= 0.0:
            return QpSolution(
                u=np.zeros(num_vars),
                status=QpStatusEnum.OPTIMAL,
                max_constraint_residual=0.0,
                iterations=0,
                multipliers=np.zeros(full_matrix.shape[0]),
            )

        dual_system = np.vstack([matrix.T, rhs[None, :]])
        target = np.zeros(num_vars + 1)
        target[-1] = 1.0
        try:
            y, _ = nnls(dual_system, target, maxiter=max_iter)
        except RuntimeError:
            logger.debug("NNLS hit its iteration limit; falling back to Hildreth")
            y = None

        if y is not None:
            gap = 1.0 - float(rhs @ y)
            if gap <= INFEASIBILITY_GAP:
                combination = np.max(np.abs(matrix.T @ y))
                if combination <= np.sqrt(tol) and rhs @ y > 0.0:
                    return QpSolution(
                        u=np.zeros(num_vars),
                        status=QpStatusEnum.INFEASIBLE,
                        max_constraint_residual=float(np.max(rhs)),
                        iterations=1,
                        certificate=expand(y),
                    )
            multipliers = y / gap if gap > INFEASIBILITY_GAP else np.zeros_like(y)
        else:
            multipliers = np.zeros(matrix.shape[0])

        u = matrix.T @ multipliers
        iterations = 1
        if self._residual(matrix, rhs, u) > tol:
            refined = self._refine_on_active_set(matrix, rhs, multipliers)
            if refined is not None:
                candidate = matrix.T @ refined
                if self._residual(matrix, rhs, candidate) < self._residual(matrix, rhs, u):
                    multipliers, u = refined, candidate
        if self._residual(matrix, rhs, u) > tol:
            u, multipliers, sweeps = self._hildreth(
                matrix, rhs, multipliers.copy(), tol, max_iter
            )
            iterations += sweeps

        residual = self._residual(matrix, rhs, u)
        status = QpStatusEnum.OPTIMAL if residual <= tol else QpStatusEnum.ITERATION_LIMIT
        return QpSolution(
            u=u,
            status=status,
            max_constraint_residual=residual,
            iterations=iterations,
            multipliers=expand(multipliers),
        )

    @staticmethod
    def bias_feasible(
        w, vertex_rows, signs_per_vertex, delta: float = 0.0
    ) -> BiasFeasibility:
        """Intersect the bias intervals of one neuron whose weights stay frozen.

        A row with sign +1 requires b >= delta - w^T v, a row with sign -1
        requires b <= -delta - w^T v.

        Args:
            w (array-like): Frozen weight row.
            vertex_rows (array-like): Stacked layer inputs.
            signs_per_vertex (array-like): Required sign per row.
            delta (float, optional): Margin. Defaults to 0.0.

        Returns:
            BiasFeasibility: The admissible interval for the new bias value,
            or the conflicting bounds when it is empty.
        """
        w = as_vector(w, "neuron weights")
        vertices = as_matrix(vertex_rows, "vertex rows")
        signs = as_vector(signs_per_vertex, "vertex signs")
        if vertices.shape[1] != w.shape[0] or signs.shape[0] != vertices.shape[0]:
            raise DimensionMismatchError(
                "bias feasibility rows", (signs.shape[0], w.shape[0]), vertices.shape
            )

        products = vertices @ w
        lower = upper = None
        lower_row = upper_row = None
        positive, negative = np.flatnonzero(signs > 0), np.flatnonzero(signs < 0)
        if positive.size:
            bounds = delta - products[positive]
            lower_row = int(positive[np.argmax(bounds)])
            lower = float(np.max(bounds))
        if negative.size:
            bounds = -delta - products[negative]
            upper_row = int(negative[np.argmin(bounds)])
            upper = float(np.min(bounds))
        feasible = lower is None or upper is None or lower <= upper
        return BiasFeasibility(
            feasible=feasible,
            lower=lower,
            upper=upper,
            lower_row=lower_row,
            upper_row=upper_row,
        )
