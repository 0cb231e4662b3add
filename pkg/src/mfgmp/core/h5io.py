'''HDF5 archive of solver snapshots.

Layout of ``snapshots.h5``::

    /            attrs: mfgmp_fileformat_version, creation_program, mfgmp_version, k, d,
                        x_min, x_max, n_x, y_min, y_max, n_y, T, dt, plus run attributes
    /t           (n_snapshots,)             snapshot times
    /phi         (n_snapshots, *shape)      major player's value
    /U           (n_snapshots, k, *shape)   crowd value
    /alpha       (n_snapshots, *shape, d)   major control
    /beta        (n_snapshots, *shape)      stopping intensity (penalized runs only)
    /contact     (n_snapshots, *shape)      contact set (obstacle runs only)
'''

import logging

import h5py
import numpy as np

from .._version import __version__
from .grid import CrowdField, GridSpec, ScalarField

log = logging.getLogger(__name__)

fileformat_version = 1

GRID_ATTRS = ('x_min', 'x_max', 'n_x', 'y_min', 'y_max', 'n_y')


def calc_chunksize(shape, dtype, max_chunksize=262144):
    '''Calculate a chunk size for HDF5 data, anticipating that access will slice
    along lower dimensions sooner than higher dimensions.'''

    chunk_shape = list(shape)
    dtype = np.dtype(dtype)
    for idim in range(len(shape)):
        chunk_nbytes = np.multiply.reduce(chunk_shape) * dtype.itemsize
        while chunk_shape[idim] > 1 and chunk_nbytes > max_chunksize:
            chunk_shape[idim] >>= 1  # divide by 2
            chunk_nbytes = np.multiply.reduce(chunk_shape) * dtype.itemsize

        if chunk_nbytes <= max_chunksize:
            break

    return tuple(chunk_shape)


def stamp_creator_data(h5group, creating_program=None):
    '''Mark the creating program and package version on ``h5group``. No user, host or time is
    recorded, so identical runs give identical archives.'''
    attrs = h5group.attrs
    attrs['creation_program'] = creating_program or 'mfgmp'
    attrs['mfgmp_version'] = __version__


def get_creator_data(h5group):
    attrs = h5group.attrs
    return {attr: attrs.get(attr) for attr in ('creation_program', 'mfgmp_version')}


def label_axes(h5object, labels):
    '''Stamp the given HDF5 object with axis labels.'''
    if len(labels) != len(h5object.shape):
        raise ValueError('number of axes and number of labels do not match')
    h5object.attrs['axis_labels'] = np.array([np.bytes_(label) for label in labels])


def stamp_grid(h5group, grid):
    attrs = h5group.attrs
    attrs['k'] = grid.k
    attrs['d'] = grid.d
    for name in GRID_ATTRS:
        attrs[name] = np.asarray(getattr(grid, name))
    attrs['T'] = grid.T
    attrs['dt'] = grid.dt


def grid_from_attrs(h5group):
    attrs = h5group.attrs
    return GridSpec(
        attrs['x_min'],
        attrs['x_max'],
        [int(n) for n in attrs['n_x']],
        attrs['y_min'],
        attrs['y_max'],
        [int(n) for n in attrs['n_y']],
        float(attrs['T']),
        float(attrs['dt']),
        k=int(attrs['k']),
        d=int(attrs['d']),
    )


def _create(h5file, name, data, labels):
    data = np.asarray(data, dtype=np.float64 if data.dtype != bool else np.bool_)
    ds = h5file.create_dataset(name, data=data, chunks=calc_chunksize(data.shape, data.dtype) if data.size else None)
    label_axes(ds, labels)
    return ds


def write_snapshots(filename, grid, snapshots, creating_program=None, **run_attrs):
    '''Write the retained states of a run to ``filename`` (overwritten).'''
    spatial = ['x{}'.format(i + 1) for i in range(grid.k)] + ['y{}'.format(j + 1) for j in range(grid.d)]
    with h5py.File(filename, 'w', track_order=True) as h5file:
        h5file.attrs['mfgmp_fileformat_version'] = fileformat_version
        stamp_creator_data(h5file, creating_program)
        stamp_grid(h5file, grid)
        for key in sorted(run_attrs):
            value = run_attrs[key]
            if value is not None:
                h5file.attrs[key] = value

        _create(h5file, 't', np.array([state.t for state in snapshots]), ['snapshot'])
        _create(h5file, 'phi', np.stack([state.phi.data for state in snapshots]), ['snapshot'] + spatial)
        _create(h5file, 'U', np.stack([state.U.data for state in snapshots]), ['snapshot', 'component'] + spatial)
        _create(h5file, 'alpha', np.stack([state.controls.alpha for state in snapshots]), ['snapshot'] + spatial + ['control'])
        if all(state.controls.beta is not None for state in snapshots):
            _create(h5file, 'beta', np.stack([state.controls.beta for state in snapshots]), ['snapshot'] + spatial)
        if all(state.contact is not None for state in snapshots):
            _create(h5file, 'contact', np.stack([state.contact for state in snapshots]), ['snapshot'] + spatial)
    log.debug('wrote {:d} snapshots to {!r}'.format(len(snapshots), filename))


def read_snapshots(filename):
    '''Read an archive written by :func:`write_snapshots`. Returns ``(grid, times, phis, Us)``
    with ``phis`` a list of :class:`ScalarField` and ``Us`` a list of :class:`CrowdField`.'''
    with h5py.File(filename, 'r') as h5file:
        version = h5file.attrs.get('mfgmp_fileformat_version')
        if version != fileformat_version:
            raise ValueError('{!r}: unsupported snapshot file format version {!r}'.format(filename, version))
        grid = grid_from_attrs(h5file)
        times = h5file['t'][...]
        phis = [ScalarField(grid, phi) for phi in h5file['phi'][...]]
        Us = [CrowdField(grid, U) for U in h5file['U'][...]]
    return grid, times, phis, Us
