#ifndef QHF_TESTS_FIXTURES_HPP
#define QHF_TESTS_FIXTURES_HPP

#include "qhf/mesh.hpp"
#include "qhf/qhd.hpp"

namespace fixture {

struct MeshBundle {
    qhf::TriangleMesh mesh;
    qhf::BasisTopology topo;
    qhf::IncidenceMatrix sigma;
    qhf::IncidenceMatrix lambda;

    explicit MeshBundle(qhf::TriangleMesh m)
        : mesh(std::move(m))
        , topo(qhf::build_basis_topology(mesh))
        , sigma(qhf::sigma_matrix(topo))
        , lambda(qhf::lambda_matrix(topo, mesh.num_vertices()))
    {
    }
};

} // namespace fixture

#endif // QHF_TESTS_FIXTURES_HPP
