#include "ddclf/plant.hpp"

#include <algorithm>
#include <stdexcept>

namespace ddclf {

Subsystem::Subsystem(MonomialBasis basis, Eigen::MatrixXd A, Eigen::MatrixXd B)
    : basis_(std::move(basis)), A_(std::move(A)), B_(std::move(B)) {
  if (A_.rows() != n() || A_.cols() != basis_.size()) {
    throw DimensionError("subsystem A must be n x N");
  }
  if (B_.rows() != n()) throw DimensionError("subsystem B must have n rows");
}

void Subsystem::set_coupling(int source, Eigen::MatrixXd D, int source_dim) {
  if (D.rows() != n() || D.cols() != source_dim) {
    throw DimensionError("coupling block from subsystem " + std::to_string(source + 1) +
                         " must be " + std::to_string(n()) + "x" + std::to_string(source_dim));
  }
  in_edges_[source] = std::move(D);
}

int Subsystem::sigma() const {
  int s = 0;
  for (const auto& [j, D] : in_edges_) s += static_cast<int>(D.cols());
  return s;
}

Eigen::MatrixXd Subsystem::adversarial_matrix() const {
  Eigen::MatrixXd D(n(), sigma());
  int col = 0;
  for (const auto& [j, Dij] : in_edges_) {
    D.middleCols(col, Dij.cols()) = Dij;
    col += static_cast<int>(Dij.cols());
  }
  return D;
}

// ---------------------------------------------------------------- topology

TopologyKind parse_topology_kind(const std::string& text) {
  if (text == "fully-connected") return TopologyKind::fully_connected;
  if (text == "ring") return TopologyKind::ring;
  if (text == "star") return TopologyKind::star;
  if (text == "line") return TopologyKind::line;
  if (text == "binary-tree") return TopologyKind::binary_tree;
  if (text == "custom" || text == "none") return TopologyKind::custom;
  throw std::invalid_argument("unknown topology kind '" + text + "'");
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::fully_connected: return "fully-connected";
    case TopologyKind::ring: return "ring";
    case TopologyKind::star: return "star";
    case TopologyKind::line: return "line";
    case TopologyKind::binary_tree: return "binary-tree";
    case TopologyKind::custom: return "custom";
  }
  return "custom";
}

bool Topology::has_edge(int source, int target) const {
  return std::binary_search(edges.begin(), edges.end(), Edge{source, target});
}

std::vector<int> Topology::sources_of(int target) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.target == target) out.push_back(e.source);
  }
  return out;
}

std::vector<int> Topology::targets_of(int source) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.source == source) out.push_back(e.target);
  }
  return out;
}

Topology custom_topology(int M, std::vector<Edge> edges) {
  if (M < 1) throw std::invalid_argument("topology needs M >= 1");
  for (const auto& e : edges) {
    if (e.source == e.target) throw std::invalid_argument("self-edges are not allowed");
    if (e.source < 0 || e.source >= M || e.target < 0 || e.target >= M) {
      throw std::out_of_range("edge endpoint outside 1..M");
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return Topology{M, TopologyKind::custom, std::move(edges)};
}

Topology build_topology(TopologyKind kind, int M) {
  if (M < 1) throw std::invalid_argument("topology needs M >= 1");
  std::vector<Edge> edges;
  switch (kind) {
    case TopologyKind::fully_connected:
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) {
          if (i != j) edges.push_back({j, i});
        }
      }
      break;
    case TopologyKind::ring:
      if (M > 1) {
        for (int i = 0; i < M; ++i) edges.push_back({(i + M - 1) % M, i});
      }
      break;
    case TopologyKind::star:
      for (int i = 1; i < M; ++i) edges.push_back({0, i});
      break;
    case TopologyKind::line:
      for (int i = 1; i < M; ++i) edges.push_back({i - 1, i});
      break;
    case TopologyKind::binary_tree: {
      if (((M + 1) & M) != 0) {
        throw std::invalid_argument("binary-tree topology needs M = 2^l - 1, got " + std::to_string(M));
      }
      // 1-based: parent j feeds children 2j and 2j+1.
      for (int j = 1; 2 * j <= M; ++j) {
        edges.push_back({j - 1, 2 * j - 1});
        if (2 * j + 1 <= M) edges.push_back({j - 1, 2 * j});
      }
      break;
    }
    case TopologyKind::custom:
      break;
  }
  Topology t = custom_topology(M, std::move(edges));
  t.kind = kind;
  return t;
}

// ----------------------------------------------------------------- network

Eigen::VectorXd Network::monomials(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) throw DimensionError("network state has wrong length");
  Eigen::VectorXd f(N_);
  for (int i = 0; i < M(); ++i) {
    const auto& s = subsystems_[i];
    f.segment(f_off_[i], s.basis().size()) = eval_basis(s.basis(), x.segment(x_off_[i], s.n()));
  }
  return f;
}

Network assemble_network(std::vector<Subsystem> subsystems, Topology topology) {
  if (static_cast<int>(subsystems.size()) != topology.M) {
    throw DimensionError("topology has " + std::to_string(topology.M) + " nodes but " +
                         std::to_string(subsystems.size()) + " subsystems were given");
  }
  Network net;
  const int M = topology.M;
  net.x_off_.resize(M);
  net.u_off_.resize(M);
  net.f_off_.resize(M);
  for (int i = 0; i < M; ++i) {
    net.x_off_[i] = net.n_;
    net.u_off_[i] = net.m_;
    net.f_off_[i] = net.N_;
    net.n_ += subsystems[i].n();
    net.m_ += subsystems[i].m();
    net.N_ += subsystems[i].basis().size();
  }
  for (int i = 0; i < M; ++i) {
    const auto& s = subsystems[i];
    for (int j : topology.sources_of(i)) {
      const auto it = s.in_edges().find(j);
      if (it == s.in_edges().end()) {
        throw std::invalid_argument("missing coupling block D_" + std::to_string(i + 1) + "," +
                                    std::to_string(j + 1) + " for declared edge");
      }
      if (it->second.rows() != s.n() || it->second.cols() != subsystems[j].n()) {
        throw DimensionError("coupling block D_" + std::to_string(i + 1) + "," +
                             std::to_string(j + 1) + " has wrong shape");
      }
    }
    for (const auto& [j, D] : s.in_edges()) {
      if (!topology.has_edge(j, i)) {
        throw std::invalid_argument("coupling block D_" + std::to_string(i + 1) + "," +
                                    std::to_string(j + 1) + " has no matching edge");
      }
    }
  }

  std::vector<Eigen::Triplet<double>> ta, tb;
  for (int i = 0; i < M; ++i) {
    const auto& s = subsystems[i];
    const auto& A = PlantOracle::A(s);
    const auto& B = PlantOracle::B(s);
    for (int r = 0; r < A.rows(); ++r) {
      for (int c = 0; c < A.cols(); ++c) {
        if (A(r, c) != 0.0) ta.emplace_back(net.x_off_[i] + r, net.f_off_[i] + c, A(r, c));
      }
      for (int c = 0; c < B.cols(); ++c) {
        if (B(r, c) != 0.0) tb.emplace_back(net.x_off_[i] + r, net.u_off_[i] + c, B(r, c));
      }
    }
    // Off-diagonal block [D_ij 0]: D_ij acts on the linear monomials of F_j,
    // which occupy the first n_j slots of the block.
    for (const auto& [j, D] : s.in_edges()) {
      for (int r = 0; r < D.rows(); ++r) {
        for (int c = 0; c < D.cols(); ++c) {
          if (D(r, c) != 0.0) ta.emplace_back(net.x_off_[i] + r, net.f_off_[j] + c, D(r, c));
        }
      }
    }
  }
  net.A_.resize(net.n_, net.N_);
  net.A_.setFromTriplets(ta.begin(), ta.end());
  net.B_.resize(net.n_, net.m_);
  net.B_.setFromTriplets(tb.begin(), tb.end());
  net.subsystems_ = std::move(subsystems);
  net.topology_ = std::move(topology);
  return net;
}

Eigen::VectorXd network_vector_field(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (x.size() != net.n()) throw DimensionError("network_vector_field: state has wrong length");
  if (u.size() != net.m()) throw DimensionError("network_vector_field: input has wrong length");
  return PlantOracle::A(net) * net.monomials(x) + PlantOracle::B(net) * u;
}

Eigen::VectorXd PlantOracle::vector_field(const Subsystem& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& u,
                                          const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() != s.sigma()) throw DimensionError("adversarial input has wrong length");
  Eigen::VectorXd dx = drift(s, x, u);
  if (w.size() > 0) dx += s.adversarial_matrix() * w;
  return dx;
}

Eigen::VectorXd PlantOracle::drift(const Subsystem& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (x.size() != s.n()) throw DimensionError("subsystem state has wrong length");
  if (u.size() != s.m()) throw DimensionError("subsystem input has wrong length");
  return s.A_ * eval_basis(s.basis(), x) + s.B_ * u;
}

// --------------------------------------------------------------- catalogue

Eigen::MatrixXd benchmark_coupling(const std::string& name) {
  if (name == "spacecraft") {
    Eigen::Matrix3d D;
    D << 0, 0, -1,
        -1, 0, 0,
         0, -1, 0;
    return 1e-4 * D;
  }
  if (name == "academic") {
    Eigen::Matrix2d D;
    D << 1, 0,
         0, 0;
    return 1e-2 * D;
  }
  if (name == "lu") return -1e-3 * Eigen::Matrix3d::Identity();
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

namespace {

Subsystem spacecraft(const Eigen::Vector3d& J) {
  // dx1 = (J2-J3)/J1 x2 x3 + u1/J1, and cyclically.
  MonomialBasis basis = MonomialBasis::parse("x1;x2;x3;x2*x3;x1*x3;x1*x2", 3);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 6);
  A(0, 3) = (J[1] - J[2]) / J[0];
  A(1, 4) = (J[2] - J[0]) / J[1];
  A(2, 5) = (J[0] - J[1]) / J[2];
  Eigen::MatrixXd B = Eigen::Vector3d(1.0 / J[0], 1.0 / J[1], 1.0 / J[2]).asDiagonal();
  return Subsystem(std::move(basis), std::move(A), std::move(B));
}

Subsystem academic() {
  MonomialBasis basis = MonomialBasis::parse("x1;x2;x1^2", 2);
  Eigen::MatrixXd A(2, 3);
  A << 0, 1, 0,
       0, 0, 1;
  Eigen::MatrixXd B(2, 1);
  B << 0, 1;
  return Subsystem(std::move(basis), std::move(A), std::move(B));
}

Subsystem lu() {
  MonomialBasis basis = MonomialBasis::parse("x1;x2;x3;x1*x3;x1*x2", 3);
  Eigen::MatrixXd A(3, 5);
  A << -36, 36,   0,  0, 0,
         0, 28,   0, -1, 0,
         0,  0, -20,  0, 1;
  Eigen::MatrixXd B(3, 1);
  B << 0, 1, 0;
  return Subsystem(std::move(basis), std::move(A), std::move(B));
}

}  // namespace

Benchmark benchmark_catalog(const std::string& name, int M, const std::string& kind,
                            const BenchmarkParams& params) {
  Subsystem proto;
  if (name == "spacecraft") {
    if ((params.inertia.array() <= 0.0).any()) throw std::invalid_argument("inertia must be positive");
    proto = spacecraft(params.inertia);
  } else if (name == "academic") {
    proto = academic();
  } else if (name == "lu") {
    proto = lu();
  } else {
    throw std::invalid_argument("unknown benchmark '" + name + "'");
  }
  Benchmark bench;
  bench.name = name;
  bench.topology = build_topology(parse_topology_kind(kind), M);
  const Eigen::MatrixXd D = benchmark_coupling(name);
  bench.subsystems.assign(M, proto);
  for (const auto& e : bench.topology.edges) {
    bench.subsystems[e.target].set_coupling(e.source, D, proto.n());
  }
  return bench;
}

}  // namespace ddclf
