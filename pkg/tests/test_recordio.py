import numpy as np
import pytest

from qtrack import filters, recordio, simulate


@pytest.fixture
def record(params):
    return simulate.simulate_record(params, 1e-6, 300, seed=4)


def test_record_round_trip(tmp_path, record):
    rec = record[1]
    rec.n_invalid = 7
    recordio.write_record(tmp_path / "a.qtrk", rec)
    back = recordio.read(tmp_path / "a.qtrk")
    assert isinstance(back, simulate.MeasurementRecord)
    assert back.i.tobytes() == rec.i.tobytes()
    assert (back.dt, back.seed, back.params_hash, back.n_invalid) == (1e-6, 4, rec.params_hash, 7)
    size = (tmp_path / "a.qtrk").stat().st_size
    assert size == recordio.HEADER.size + 8 * 2 * 300


def test_carrier_round_trip(tmp_path, params, record):
    carrier = simulate.synthesize_carrier(record[0], params, seed=4)
    recordio.write_carrier(tmp_path / "c.qtrk", carrier)
    back = recordio.read(tmp_path / "c.qtrk")
    assert isinstance(back, simulate.CarrierRecord)
    assert np.array_equal(back.current, carrier.current)
    assert back.fs == pytest.approx(carrier.fs, rel=1e-15)
    assert back.omega_m == params.omega_m


def test_trajectory_round_trip(tmp_path, rates, record):
    traj = filters.retrodict(record[1], rates)
    recordio.write_trajectory(tmp_path / "r.qtrk", traj, seed=4)
    back = recordio.read(tmp_path / "r.qtrk")
    assert back.kind == "retrodicted"
    assert np.array_equal(back.mean, traj.mean)
    assert np.array_equal(back.variance, traj.variance)
    assert back.conditioned.all()


def test_anonymous_record(tmp_path):
    rec = simulate.MeasurementRecord(1e-6, np.zeros((2, 10)))
    recordio.write_record(tmp_path / "z.qtrk", rec)
    back = recordio.read(tmp_path / "z.qtrk")
    assert back.seed is None and back.params_hash is None


def test_bad_magic(tmp_path, record):
    path = tmp_path / "a.qtrk"
    recordio.write_record(path, record[1])
    data = bytearray(path.read_bytes())
    data[:4] = b"JUNK"
    path.write_bytes(bytes(data))
    with pytest.raises(recordio.RecordFormatError):
        recordio.read(path)


def test_truncated_file(tmp_path, record):
    path = tmp_path / "a.qtrk"
    recordio.write_record(path, record[1])
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(recordio.RecordFormatError, match="expected"):
        recordio.read(path)
    path.write_bytes(b"QT")
    with pytest.raises(recordio.RecordFormatError):
        recordio.read(path)


def test_read_records_stacks(tmp_path, params):
    paths = []
    for k in range(3):
        _, rec = simulate.simulate_record(params, 1e-6, 100, seed=1, index=k)
        paths.append(tmp_path / f"seg_{k:05d}.qtrk")
        recordio.write_record(paths[-1], rec)
    batch = recordio.read_records(paths)
    assert batch.i.shape == (3, 2, 100)
    expected = simulate.simulate_record(params, 1e-6, 100, seed=1, index=np.arange(3))[1]
    assert np.array_equal(batch.i, expected.i)
    _, odd = simulate.simulate_record(params, 1e-6, 50, seed=1)
    recordio.write_record(tmp_path / "odd.qtrk", odd)
    with pytest.raises(recordio.RecordFormatError):
        recordio.read_records(paths + [tmp_path / "odd.qtrk"])
    with pytest.raises(ValueError):
        recordio.read_records([])


def test_csv_round_trip(tmp_path, record):
    recordio.record_to_csv(tmp_path / "r.csv", record[1])
    cols = recordio.read_csv(tmp_path / "r.csv")
    assert list(cols) == ["t_s", "i_x", "i_y"]
    assert np.allclose(cols["i_x"], record[1].i[0], rtol=1e-9)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "t_s,i_x,i_y"
