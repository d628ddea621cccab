
import numpy as np
import pytest
from hypothesis import given, strategies as st

from oecsim.engine import derive_stream
from oecsim.network import LatencyModel, LatencyTier, TierParams
from oecsim.workload import (
    Request,
    RequestOutcome,
    SingularMatrixError,
    TaskSpec,
    calibrate_service_time,
    generate_arrivals,
    lu_factor,
    lu_solve,
    read_coordinate_matrix,
    upload_time_ms,
    well_conditioned_matrix,
)


def test_task_payloads():
    spec = TaskSpec()
    assert (spec.n, spec.nnz) == (147, 1294)
    assert spec.payload_a_bytes == 20_704
    assert spec.payload_b_bytes == spec.payload_x_bytes == 8 * 147
    with pytest.raises(ValueError):
        TaskSpec(n=2, nnz=5)
    with pytest.raises(ValueError):
        TaskSpec(n=0, nnz=0)


def test_arrival_count_and_gaps():
    times = generate_arrivals(2.0, 1000.0, derive_stream(1, "arrivals"))
    assert 1900 <= len(times) <= 2100
    assert times == sorted(times)
    assert times[0] >= 0 and times[-1] < 1_000_000_000
    gaps = np.diff(times) / 1e6
    assert gaps.mean() == pytest.approx(0.5, rel=0.05)


def test_arrivals_degenerate_and_reproducible():
    assert generate_arrivals(2.0, 0.0, derive_stream(1, "a")) == []
    assert generate_arrivals(0.0, 10.0, derive_stream(1, "a")) == []
    assert generate_arrivals(3.0, 50.0, derive_stream(7, "a")) == generate_arrivals(3.0, 50.0, derive_stream(7, "a"))


EXACT = LatencyModel(TierParams(5.0, 0.0), TierParams(10.0, 0.0), TierParams(50.0, 0.0))


def test_upload_times_closed_form():
    spec = TaskSpec()
    rng = derive_stream(1, "lat")
    assert upload_time_ms(spec, EXACT, LatencyTier.INTRA_ZONE, rng) == 10.0
    assert upload_time_ms(spec, EXACT, LatencyTier.DEVICE_TO_CLOUD, rng) == 100.0
    tiny = LatencyModel(TierParams(1e-300, 0.0), TierParams(1e-300, 0.0), TierParams(1e-300, 0.0))
    assert upload_time_ms(spec, tiny, LatencyTier.INTRA_ZONE, rng, 1e6) == pytest.approx(20.704)


def test_request_retry_count():
    r = Request(0, "d", 0)
    assert r.retry_count == 0
    r.history += ["a", "b", "c"]
    assert r.retry_count == 2


def test_outcome_processing_time():
    o = RequestOutcome(0, "d", 1_000, 13_000, "n", LatencyTier.INTRA_ZONE, 0)
    assert o.processing_time_ms == 12.0


def test_lu_identity():
    b = np.arange(1.0, 6.0)
    assert np.array_equal(lu_solve(np.eye(5), b), b)


def test_lu_two_by_two():
    assert np.allclose(lu_solve([[2.0, 1.0], [1.0, 3.0]], [3.0, 4.0]), [1.0, 1.0], atol=1e-14)


def test_lu_singular():
    with pytest.raises(SingularMatrixError):
        lu_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


def test_lu_shape_errors():
    with pytest.raises(ValueError):
        lu_factor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        lu_solve(np.eye(3), np.ones(2))


def test_lu_factor_reconstructs_permuted_matrix():
    a = well_conditioned_matrix(20, np.random.default_rng(3))
    lu, piv = lu_factor(a)
    lower = np.tril(lu, -1) + np.eye(20)
    upper = np.triu(lu)
    assert np.allclose(a[piv], lower @ upper)


def test_lu_needs_pivoting():
    # Zero leading entry: fails without a row swap.
    x = lu_solve([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0])
    assert np.allclose(x, [3.0, 2.0])


@given(st.integers(2, 50), st.integers(0, 2**32 - 1))
def test_lu_matches_reference_solver(n, seed):
    rng = np.random.default_rng(seed)
    a = well_conditioned_matrix(n, rng)
    b = rng.uniform(-1, 1, n)
    x = lu_solve(a, b)
    assert np.allclose(x, np.linalg.solve(a, b), rtol=1e-9, atol=1e-12)
    resid = np.abs(a @ x - b).max()
    assert resid <= 1e-9 * (np.abs(a).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max())


def test_read_coordinate_matrix(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("% comment\n3 4\n1 1 2.0\n2 2 3.0\n3 3 4.0\n1 3 1.0\n")
    a = read_coordinate_matrix(p)
    assert a.tolist() == [[2.0, 0.0, 1.0], [0.0, 3.0, 0.0], [0.0, 0.0, 4.0]]
    p.write_text("3 2\n1 1 2.0\n")
    with pytest.raises(ValueError):
        read_coordinate_matrix(p)
    p.write_text("2 1\n3 1 2.0\n")
    with pytest.raises(ValueError):
        read_coordinate_matrix(p)


def test_calibration_n147():
    prof = calibrate_service_time(147, 5)
    assert prof.factorization_time_ms > prof.solve_time_ms > 0


def test_calibration_n1_positive():
    prof = calibrate_service_time(1, 5)
    assert prof.solve_time_ms > 0 and prof.factorization_time_ms > 0


def test_calibration_is_stable():
    a = calibrate_service_time(147, 5)
    b = calibrate_service_time(147, 50)
    ratio = a.factorization_time_ms / b.factorization_time_ms
    assert 0.5 <= ratio <= 1.5


def test_calibration_bounds():
    with pytest.raises(ValueError):
        calibrate_service_time(1001, 5)
    with pytest.raises(ValueError):
        calibrate_service_time(10, 4)
