"""Shared fixtures: refraction indices and cached assembled pencils.

Assembly at N=32 takes noticeable time, so pencils are memoized per
(domain, N, refraction, trick) and shared read-only across test modules.
Tests that measure wall time build their own objects instead of going
through the cache.
"""
import functools

import pytest

from transeig import (
    Domain,
    RefractionIndex,
    assemble_matrices,
    build_mesh,
    build_pencil,
)

N16 = RefractionIndex.constant(16.0)
AFFINE = RefractionIndex.affine(8.0, 1.0, -1.0)


@functools.lru_cache(maxsize=32)
def cached_mesh(domain, n_subdiv):
    return build_mesh(domain, n_subdiv)


@functools.lru_cache(maxsize=32)
def cached_pencil(domain, n_subdiv, refraction, identity_trick=True):
    mesh = cached_mesh(domain, n_subdiv)
    return build_pencil(
        assemble_matrices(mesh, refraction), identity_trick=identity_trick
    )


@pytest.fixture(scope="session")
def n16():
    return N16


@pytest.fixture(scope="session")
def affine_n():
    return AFFINE


@pytest.fixture(scope="session")
def pencil_cache():
    return cached_pencil


@pytest.fixture(scope="session")
def mesh_cache():
    return cached_mesh
