// Ground-truth subsystems, interconnection topologies and network assembly.
//
// The system matrices A_i, B_i of a Subsystem are private. Synthesis code only
// sees the adversarial blocks D_ij and recorded trajectories; simulation and
// verification go through PlantOracle.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ddclf/poly.hpp"

namespace ddclf {

class PlantOracle;

class Subsystem {
 public:
  Subsystem() = default;
  /// `basis` lists the monomials the true dynamics use; A is n x N over it.
  Subsystem(MonomialBasis basis, Eigen::MatrixXd A, Eigen::MatrixXd B);

  int n() const { return basis_.nvars(); }
  int m() const { return static_cast<int>(B_.cols()); }
  const MonomialBasis& basis() const { return basis_; }

  /// Adds the coupling block D_ij for the channel from subsystem `source`.
  void set_coupling(int source, Eigen::MatrixXd D, int source_dim);
  const std::map<int, Eigen::MatrixXd>& in_edges() const { return in_edges_; }

  /// sigma = sum of neighbour dimensions over incoming channels.
  int sigma() const;
  /// D_i = [D_ij ...] over sources in increasing id order (n x sigma).
  Eigen::MatrixXd adversarial_matrix() const;

 private:
  friend class PlantOracle;

  MonomialBasis basis_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
  std::map<int, Eigen::MatrixXd> in_edges_;
};

enum class TopologyKind { fully_connected, ring, star, line, binary_tree, custom };

TopologyKind parse_topology_kind(const std::string& text);
std::string to_string(TopologyKind kind);

struct Edge {
  int source = 0;  // j (0-based)
  int target = 0;  // i (0-based), meaning x_j feeds subsystem i
  bool operator<(const Edge& o) const {
    return std::pair(target, source) < std::pair(o.target, o.source);
  }
  bool operator==(const Edge& o) const = default;
};

struct Topology {
  int M = 0;
  TopologyKind kind = TopologyKind::custom;
  std::vector<Edge> edges;  // sorted by (target, source)

  bool has_edge(int source, int target) const;
  std::vector<int> sources_of(int target) const;
  std::vector<int> targets_of(int source) const;
};

Topology build_topology(TopologyKind kind, int M);
/// Custom topology from an explicit edge list (0-based).
Topology custom_topology(int M, std::vector<Edge> edges);

/// Assembled interconnected network dx/dt = A F(x) + B u.
class Network {
 public:
  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  const Topology& topology() const { return topology_; }
  int M() const { return static_cast<int>(subsystems_.size()); }
  int n() const { return n_; }
  int N() const { return N_; }
  int m() const { return m_; }
  int state_offset(int i) const { return x_off_[i]; }
  int input_offset(int i) const { return u_off_[i]; }
  int monomial_offset(int i) const { return f_off_[i]; }

  /// Stacked monomial vector [F_1(x_1); ...; F_M(x_M)].
  Eigen::VectorXd monomials(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  friend Network assemble_network(std::vector<Subsystem>, Topology);
  friend class PlantOracle;

  std::vector<Subsystem> subsystems_;
  Topology topology_;
  int n_ = 0, N_ = 0, m_ = 0;
  std::vector<int> x_off_, u_off_, f_off_;
  Eigen::SparseMatrix<double> A_, B_;
};

/// Builds A with diagonal blocks A_i and off-diagonal blocks [D_ij 0] on edges,
/// and B = blkdiag(B_i). Throws on missing or mis-shaped coupling blocks.
Network assemble_network(std::vector<Subsystem> subsystems, Topology topology);

Eigen::VectorXd network_vector_field(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& u);

/// Privileged access to hidden dynamics (simulation, verification, tests).
class PlantOracle {
 public:
  static const Eigen::MatrixXd& A(const Subsystem& s) { return s.A_; }
  static const Eigen::MatrixXd& B(const Subsystem& s) { return s.B_; }
  static const Eigen::SparseMatrix<double>& A(const Network& net) { return net.A_; }
  static const Eigen::SparseMatrix<double>& B(const Network& net) { return net.B_; }

  /// A F(x) + B u + D w for a single subsystem.
  static Eigen::VectorXd vector_field(const Subsystem& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& u,
                                      const Eigen::Ref<const Eigen::VectorXd>& w);
  /// A F(x) + B u (no adversarial term).
  static Eigen::VectorXd drift(const Subsystem& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& u);
};

struct BenchmarkParams {
  Eigen::Vector3d inertia{1.0, 1.2, 1.5};  // spacecraft J1, J2, J3
};

struct Benchmark {
  std::string name;
  std::vector<Subsystem> subsystems;
  Topology topology;
};

/// Case-study networks: "spacecraft", "academic", "lu". `kind` may be any
/// topology kind, or "none" for an uncoupled network.
Benchmark benchmark_catalog(const std::string& name, int M, const std::string& kind,
                            const BenchmarkParams& params = {});

/// Coupling block used by a catalog benchmark for every edge.
Eigen::MatrixXd benchmark_coupling(const std::string& name);

}  // namespace ddclf
