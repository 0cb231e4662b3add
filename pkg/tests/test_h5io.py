import h5py
import numpy as np
import pytest

from mfgmp.core.evolution import solve_system
from mfgmp.core.h5io import calc_chunksize, get_creator_data, label_axes, read_snapshots, write_snapshots
from mfgmp.core.models import canonical_stopping, lq_model
from mfgmp.core.options import SolverOptions
from mfgmp.core.stopping import solve_obstacle, solve_penalized


class TestSnapshotArchive:
    def test_system_archive(self, tmp_path, lq_spec, small_grid):
        snapshots = solve_system(lq_spec, small_grid, SolverOptions(snapshot_every=5))
        filename = str(tmp_path / 'snapshots.h5')
        write_snapshots(filename, small_grid, snapshots, 'test', mode='SYSTEM', seed=4, note=None)

        grid, times, phis, Us = read_snapshots(filename)
        assert grid.shape == small_grid.shape
        assert grid.dt == small_grid.dt
        assert np.allclose(times, [0.0, 0.05, 0.1])
        assert np.array_equal(phis[-1].data, snapshots[-1].phi.data)
        assert np.array_equal(Us[1].data, snapshots[1].U.data)

        with h5py.File(filename, 'r') as h5file:
            assert get_creator_data(h5file)['creation_program'] == 'test'
            assert h5file.attrs['seed'] == 4
            assert 'note' not in h5file.attrs
            assert h5file['alpha'].shape == (3,) + small_grid.shape + (1,)
            assert list(h5file['U'].attrs['axis_labels']) == [b'snapshot', b'component', b'x1', b'x2', b'y1']
            assert 'beta' not in h5file
            assert 'contact' not in h5file

    def test_stopping_datasets(self, tmp_path, small_grid):
        spec = lq_model(drive=2.0)
        stop = canonical_stopping(2, 1, 0.1)
        penalized, _diagnostics = solve_penalized(spec, small_grid, stop, SolverOptions(snapshot_every=5))
        obstacle, _report = solve_obstacle(spec, small_grid, stop, SolverOptions(snapshot_every=5))

        write_snapshots(str(tmp_path / 'penalized.h5'), small_grid, penalized)
        write_snapshots(str(tmp_path / 'obstacle.h5'), small_grid, obstacle)
        with h5py.File(str(tmp_path / 'penalized.h5'), 'r') as h5file:
            assert h5file['beta'].shape == (3,) + small_grid.shape
            assert np.all(h5file['beta'][...] >= 0)
        with h5py.File(str(tmp_path / 'obstacle.h5'), 'r') as h5file:
            assert h5file['contact'].dtype == np.bool_

    def test_format_version_checked(self, tmp_path):
        filename = str(tmp_path / 'other.h5')
        with h5py.File(filename, 'w') as h5file:
            h5file.attrs['mfgmp_fileformat_version'] = 99
        with pytest.raises(ValueError):
            read_snapshots(filename)


class TestHelpers:
    def test_chunksize_bounded(self):
        chunks = calc_chunksize((1000, 201, 201), np.float64)
        assert np.prod(chunks) * 8 <= 262144
        assert chunks[1:] == (201, 201) or chunks[0] == 1

    def test_small_data_single_chunk(self):
        assert calc_chunksize((3, 5, 5), np.float64) == (3, 5, 5)

    def test_label_mismatch(self, tmp_path):
        with h5py.File(str(tmp_path / 'labels.h5'), 'w') as h5file:
            ds = h5file.create_dataset('x', data=np.zeros((2, 3)))
            with pytest.raises(ValueError):
                label_axes(ds, ['only one'])
