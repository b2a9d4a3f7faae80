""" Isolated helper functions for array operations. """

import numpy as np

__all__ = ['embedMatrix', 'rowScale', 'blockSlices']


def embedMatrix(block, wall, position):
    """
    Embeds a small matrix into a bigger one, with the top left corner
    of the block at position. If a length-2 tuple is given instead of a
    big matrix, a zero matrix of that size is used.
    """
    if type(wall) == tuple:
        wall = np.zeros(wall, dtype=block.dtype)
    else:
        wall = wall.copy()
    i, j = position
    if i + block.shape[0] > wall.shape[0] or j + block.shape[1] > wall.shape[1]:
        raise ValueError('Trying to put embedded matrix outside the boundaries of the embedding matrix.')
    wall[i:i + block.shape[0], j:j + block.shape[1]] = block
    return wall


def rowScale(u, W):
    """
    Row-wise product u o W, every row W[k] multiplied by u[k]. For two
    vectors this is the plain elementwise product.
    """
    u = np.asarray(u)
    W = np.asarray(W)
    if W.ndim == 1:
        return u * W
    return u[:, None] * W


def blockSlices(sizes):
    """ Returns a list of slices partitioning a vector into consecutive blocks of the given sizes. """
    edges = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    return [slice(edges[k], edges[k + 1]) for k in range(len(sizes))]
