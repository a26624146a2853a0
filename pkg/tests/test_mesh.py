import numpy as np
import pytest

from phasefrac import elements
from phasefrac.mesh import (
    DegenerateMeshError,
    Mesh,
    MeshFormatError,
    MeshValidationError,
    NotchedSquareSpec,
    UnsupportedGeometryError,
    generate_notched_square,
    load_mesh,
    save_mesh,
)


def mesh_volume(mesh):
    _, _, _, wdet = elements.compute_batch_matrices(
        mesh.kind, mesh.nodes[mesh.elements]
    )
    return wdet.sum()


def test_coarse_notched_square_counts():
    mesh = generate_notched_square(NotchedSquareSpec(h=0.25))
    assert mesh.kind == "quad4"
    assert mesh.n_elements == 16
    # 5x5 structured grid plus 2 duplicated slit nodes (the tip stays single)
    assert mesh.n_nodes == 27
    dup_x = sorted(
        x
        for (x, y), count in zip(
            *np.unique(np.round(mesh.nodes, 12), axis=0, return_counts=True)
        )
        if count == 2
    )
    assert dup_x == [0.0, 0.25]


def test_duplicated_nodes_coincide_but_differ():
    mesh = generate_notched_square(NotchedSquareSpec(h=0.25))
    coords, counts = np.unique(mesh.nodes, axis=0, return_counts=True)
    dups = coords[counts == 2]
    assert np.all(dups[:, 1] == 0.5)
    assert np.all(dups[:, 0] < 0.5)


def test_no_element_spans_the_slit():
    mesh = generate_notched_square(NotchedSquareSpec(h=0.25))
    n_struct = 25
    for el in mesh.elements:
        has_dup = np.any(el >= n_struct)
        if has_dup:
            # elements using duplicates lie entirely below the notch line
            assert np.all(mesh.nodes[el, 1] <= 0.5)
        originals_on_slit = [
            n
            for n in el
            if n < n_struct and mesh.nodes[n, 1] == 0.5 and mesh.nodes[n, 0] < 0.5
        ]
        if originals_on_slit:
            assert np.all(mesh.nodes[el, 1] >= 0.5)


def test_boundary_sets_present_and_correct():
    mesh = generate_notched_square(NotchedSquareSpec(h=0.25))
    assert set(mesh.boundary_sets) == {"top", "bottom", "left", "right"}
    assert np.all(mesh.nodes[mesh.boundary_set("top"), 1] == 1.0)
    assert np.all(mesh.nodes[mesh.boundary_set("bottom"), 1] == 0.0)
    assert np.all(mesh.nodes[mesh.boundary_set("left"), 0] == 0.0)
    assert np.all(mesh.nodes[mesh.boundary_set("right"), 0] == 1.0)


def test_too_coarse_mesh_rejected():
    with pytest.raises(DegenerateMeshError):
        generate_notched_square(NotchedSquareSpec(h=1.0))


def test_non_horizontal_notch_rejected():
    spec = NotchedSquareSpec(notch_start=(0.0, 0.4), notch_end=(0.5, 0.6), h=0.25)
    with pytest.raises(UnsupportedGeometryError):
        generate_notched_square(spec)


def test_interior_start_rejected():
    spec = NotchedSquareSpec(notch_start=(0.1, 0.5), notch_end=(0.5, 0.5), h=0.25)
    with pytest.raises(UnsupportedGeometryError):
        generate_notched_square(spec)


def test_extruded_hex_counts():
    mesh = generate_notched_square(
        NotchedSquareSpec(h=0.5, thickness=0.5, layers=1)
    )
    assert mesh.kind == "hex8"
    assert mesh.dim == 3
    assert mesh.n_elements == 4
    assert {"front", "back"} <= set(mesh.boundary_sets)
    assert np.all(mesh.nodes[mesh.boundary_set("back"), 2] == 0.0)
    assert np.all(mesh.nodes[mesh.boundary_set("front"), 2] == 0.5)


@pytest.mark.parametrize(
    "spec,volume",
    [
        (NotchedSquareSpec(h=0.25), 1.0),
        (NotchedSquareSpec(h=0.2, thickness=0.5, layers=2), 0.5),
        (
            NotchedSquareSpec(
                h=0.25,
                h_fine=0.1,
                refine_below=0.2,
                refine_above=0.2,
                refine_back=0.2,
            ),
            1.0,
        ),
    ],
)
def test_total_volume(spec, volume):
    mesh = generate_notched_square(spec)
    assert mesh_volume(mesh) == pytest.approx(volume, rel=1e-10)


def test_refined_mesh_resolves_the_band():
    spec = NotchedSquareSpec(
        h=0.25, h_fine=0.05, refine_below=0.1, refine_above=0.1, refine_back=0.1
    )
    mesh = generate_notched_square(spec)
    xs = np.unique(mesh.nodes[:, 0])
    ys = np.unique(mesh.nodes[:, 1])
    # notch line and tip are exact grid lines
    assert 0.5 in xs and 0.5 in ys
    band = ys[(ys >= 0.4) & (ys <= 0.6)]
    assert np.diff(band).max() <= 0.05 + 1e-12
    ahead = xs[xs >= 0.5]
    assert np.diff(ahead).max() <= 0.05 + 1e-12


def test_refinement_validation():
    with pytest.raises(ValueError):
        NotchedSquareSpec(h=0.1, h_fine=0.2, refine_below=0.1, refine_above=0.1,
                          refine_back=0.1)
    with pytest.raises(ValueError):
        NotchedSquareSpec(h=0.1, h_fine=0.05)


def test_round_trip(tmp_path):
    mesh = generate_notched_square(NotchedSquareSpec(h=0.25))
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    loaded = load_mesh(path)
    np.testing.assert_array_equal(loaded.nodes, mesh.nodes)
    np.testing.assert_array_equal(loaded.elements, mesh.elements)
    assert loaded.kind == mesh.kind
    assert set(loaded.boundary_sets) == set(mesh.boundary_sets)
    for name in mesh.boundary_sets:
        np.testing.assert_array_equal(
            loaded.boundary_set(name), mesh.boundary_set(name)
        )


def test_malformed_header_reports_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 4\n")
    with pytest.raises(MeshFormatError) as err:
        load_mesh(path)
    assert err.value.line == 1


def test_bad_connectivity_index(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(
        "2 4 1 quad4\n"
        "0.0 0.0\n1.0 0.0\n1.0 1.0\n0.0 1.0\n"
        "0 1 2 9\n"
        "set left 1\n0\n"
    )
    with pytest.raises(MeshValidationError):
        load_mesh(path)


def test_empty_boundary_set_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(
        "2 4 1 quad4\n"
        "0.0 0.0\n1.0 0.0\n1.0 1.0\n0.0 1.0\n"
        "0 1 2 3\n"
        "set left 0\n\n"
    )
    with pytest.raises(MeshValidationError):
        load_mesh(path)


def test_inverted_element_rejected():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(elements.InvertedElementError):
        Mesh(
            dim=2,
            nodes=nodes,
            elements=np.array([[0, 3, 2, 1]]),
            kind="quad4",
            boundary_sets={"left": np.array([0])},
        )


def test_mesh_validation_errors():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    quad = np.array([[0, 1, 2, 3]])
    with pytest.raises(MeshValidationError):
        Mesh(dim=2, nodes=nodes, elements=np.array([[0, 1, 2, 4]]), kind="quad4")
    with pytest.raises(MeshValidationError):
        Mesh(dim=2, nodes=nodes, elements=quad, kind="hex8")
    with pytest.raises(MeshValidationError):
        Mesh(dim=2, nodes=nodes, elements=quad, kind="quad4",
             boundary_sets={"left": np.array([], dtype=int)})
    with pytest.raises(KeyError):
        Mesh(dim=2, nodes=nodes, elements=quad, kind="quad4").boundary_set("top")
