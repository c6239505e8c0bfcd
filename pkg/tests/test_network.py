import numpy as np
import pytest

from distinv.network import Coupling, NetworkError, NetworkSystem, Subsystem, assemble


def two_node():
    a = Subsystem("a", [[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]])
    b = Subsystem("b", [[2.0]], [[1.0]])
    return assemble([a, b], [Coupling("a", "b", A=[[0.5, 0.0]], B=[[0.25]])])


def test_assemble_blocks():
    sys = two_node()
    assert (sys.N, sys.n, sys.m) == (2, 3, 2)
    np.testing.assert_array_equal(sys.A, [[1, 1, 0], [0, 1, 0], [0.5, 0, 2]])
    np.testing.assert_array_equal(sys.B, [[0, 0], [1, 0], [0.25, 1]])
    np.testing.assert_array_equal(sys.state_owner, [0, 0, 1])
    np.testing.assert_array_equal(sys.control_owner, [0, 1])
    assert sys.state_slice(0) == slice(0, 2)
    assert sys.control_slice(1) == slice(1, 2)
    assert sys.index("b") == 1


def test_step_and_round_trip():
    sys = two_node()
    x, u, w = np.array([1.0, 2.0, 3.0]), np.array([0.5, -1.0]), np.array([0.1, 0.0, -0.1])
    np.testing.assert_allclose(sys.step(x, u, w), sys.A @ x + sys.B @ u + w)
    back = NetworkSystem.from_dict(sys.to_dict())
    np.testing.assert_array_equal(back.A, sys.A)
    np.testing.assert_array_equal(back.B, sys.B)
    assert back.ids == sys.ids


def test_arrays_are_read_only():
    sys = two_node()
    with pytest.raises(ValueError):
        sys.A[0, 0] = 5.0


@pytest.mark.parametrize(
    "build",
    [
        lambda: Subsystem("a", np.ones((2, 3)), np.ones((2, 1))),
        lambda: Subsystem("a", np.eye(2), np.ones((3, 1))),
        lambda: Coupling("a", "a"),
        lambda: assemble([Subsystem("a", [[1.0]], [[1.0]])] * 2),
        lambda: assemble([Subsystem("a", [[1.0]], [[1.0]])], [Coupling("a", "z", A=[[1.0]])]),
        lambda: assemble(
            [Subsystem("a", [[1.0]], [[1.0]]), Subsystem("b", [[1.0]], [[1.0]])],
            [Coupling("a", "b", A=np.ones((2, 2)))],
        ),
        lambda: NetworkSystem.from_dict({"subsystems": [{"id": "a", "A": [[1.0]]}]}),
    ],
)
def test_network_errors(build):
    with pytest.raises(NetworkError):
        build()


def test_step_size_error():
    with pytest.raises(NetworkError, match="step expects"):
        two_node().step(np.zeros(2), np.zeros(2), np.zeros(3))
