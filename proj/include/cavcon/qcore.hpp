// qcore.hpp
// Dense complex linear algebra over small labeled composite Hilbert spaces:
// tensor products, operator embedding, partial traces, Fock ladder operators
// and pure-state fidelities.
//
// Conventions (every other module depends on these):
//   * flat amplitude indexing is row-major in listed subsystem order, the
//     first subsystem varying slowest;
//   * two-level atoms use basis (|g> = 0, |e> = 1);
//   * Fock bases are ascending |0>, |1>, ..., |n_max>.
// All types are immutable values after construction; operations return new
// values and never mutate their inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "cavcon/errors.hpp"

namespace cavcon {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

// Equality tolerance for amplitudes and matrix entries.
inline constexpr double kAmpTol = 1e-12;
// Eigenvalue floor for positivity checks.
inline constexpr double kPosTol = 1e-10;

struct Subsystem {
  std::string label;
  int dim = 0;
};

// Ordered list of labeled tensor factors. Total dimension is capped to guard
// against accidental blowup when composing layouts.
class SubsystemLayout {
 public:
  static constexpr std::size_t kDefaultDimCap = 4096;

  SubsystemLayout(std::vector<Subsystem> subsystems,
                  std::size_t dim_cap = kDefaultDimCap)
      : subsystems_(std::move(subsystems)) {
    if (subsystems_.empty()) throw layout_error("layout needs at least one subsystem");
    dim_ = 1;
    for (const auto& s : subsystems_) {
      if (s.label.empty()) throw layout_error("empty subsystem label");
      if (s.dim < 2) throw layout_error("subsystem '" + s.label + "' has dim < 2");
      if (dim_ > dim_cap / static_cast<std::size_t>(s.dim))
        throw layout_error("total dimension exceeds cap");
      dim_ *= static_cast<std::size_t>(s.dim);
    }
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      for (std::size_t j = i + 1; j < subsystems_.size(); ++j)
        if (subsystems_[i].label == subsystems_[j].label)
          throw layout_error("duplicate subsystem label '" + subsystems_[i].label + "'");
    strides_.resize(subsystems_.size());
    std::size_t stride = dim_;
    for (std::size_t i = 0; i < subsystems_.size(); ++i) {
      stride /= static_cast<std::size_t>(subsystems_[i].dim);
      strides_[i] = stride;
    }
  }

  SubsystemLayout(std::initializer_list<Subsystem> subsystems,
                  std::size_t dim_cap = kDefaultDimCap)
      : SubsystemLayout(std::vector<Subsystem>(subsystems), dim_cap) {}

  std::size_t subsystem_count() const { return subsystems_.size(); }
  const Subsystem& subsystem(std::size_t pos) const { return subsystems_.at(pos); }
  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  std::size_t dim() const { return dim_; }

  bool contains(std::string_view label) const {
    return std::any_of(subsystems_.begin(), subsystems_.end(),
                       [&](const Subsystem& s) { return s.label == label; });
  }

  std::size_t position(std::string_view label) const {
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      if (subsystems_[i].label == label) return i;
    throw layout_error("unknown subsystem label '" + std::string(label) + "'");
  }

  int dim_of(std::string_view label) const { return subsystems_[position(label)].dim; }

  // Flat-index stride of the subsystem at `pos` (row-major, first slowest).
  std::size_t stride(std::size_t pos) const { return strides_.at(pos); }

  std::size_t flat_index(std::span<const int> digits) const {
    if (digits.size() != subsystems_.size())
      throw layout_error("digit count does not match subsystem count");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (digits[i] < 0 || digits[i] >= subsystems_[i].dim)
        throw layout_error("basis index out of range for '" + subsystems_[i].label + "'");
      flat += static_cast<std::size_t>(digits[i]) * strides_[i];
    }
    return flat;
  }

  // Basis index of the subsystem at `pos` within the flat index.
  int digit_at(std::size_t flat, std::size_t pos) const {
    return static_cast<int>((flat / strides_[pos]) %
                            static_cast<std::size_t>(subsystems_[pos].dim));
  }

  bool operator==(const SubsystemLayout& other) const {
    if (subsystems_.size() != other.subsystems_.size()) return false;
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      if (subsystems_[i].label != other.subsystems_[i].label ||
          subsystems_[i].dim != other.subsystems_[i].dim)
        return false;
    return true;
  }
  bool operator!=(const SubsystemLayout& other) const { return !(*this == other); }

 private:
  std::vector<Subsystem> subsystems_;
  std::vector<std::size_t> strides_;
  std::size_t dim_ = 0;
};

inline SubsystemLayout concat(const SubsystemLayout& a, const SubsystemLayout& b) {
  std::vector<Subsystem> subs = a.subsystems();
  subs.insert(subs.end(), b.subsystems().begin(), b.subsystems().end());
  return SubsystemLayout(std::move(subs));
}

// Complex amplitude vector over a layout. Possibly unnormalized: the squared
// norm of a conditionally evolved state is the probability of the record.
class StateVector {
 public:
  StateVector(SubsystemLayout layout, ComplexVector amps)
      : layout_(std::move(layout)), amps_(std::move(amps)) {
    if (static_cast<std::size_t>(amps_.size()) != layout_.dim())
      throw layout_error("amplitude vector length does not match layout dimension");
  }

  static StateVector zero(SubsystemLayout layout) {
    ComplexVector v = ComplexVector::Zero(static_cast<Eigen::Index>(layout.dim()));
    return StateVector(std::move(layout), std::move(v));
  }

  static StateVector basis(SubsystemLayout layout, std::span<const int> digits) {
    ComplexVector v = ComplexVector::Zero(static_cast<Eigen::Index>(layout.dim()));
    v(static_cast<Eigen::Index>(layout.flat_index(digits))) = 1.0;
    return StateVector(std::move(layout), std::move(v));
  }
  static StateVector basis(SubsystemLayout layout, std::initializer_list<int> digits) {
    return basis(std::move(layout), std::span<const int>(digits.begin(), digits.size()));
  }

  const SubsystemLayout& layout() const { return layout_; }
  const ComplexVector& amps() const { return amps_; }
  std::size_t dim() const { return layout_.dim(); }
  Complex amp(std::size_t flat) const { return amps_(static_cast<Eigen::Index>(flat)); }

  double norm2() const { return amps_.squaredNorm(); }
  double norm() const { return amps_.norm(); }

  StateVector normalized() const {
    const double n = norm();
    if (!(n > 1e-150)) throw numerical_error("cannot normalize a (near-)zero state");
    return StateVector(layout_, amps_ / n);
  }

  StateVector scaled(Complex factor) const { return StateVector(layout_, amps_ * factor); }

 private:
  SubsystemLayout layout_;
  ComplexVector amps_;
};

inline Complex inner(const StateVector& bra, const StateVector& ket) {
  if (bra.layout() != ket.layout()) throw layout_error("inner product across different layouts");
  return bra.amps().dot(ket.amps());  // Eigen's dot conjugates the left argument
}

// Square complex matrix acting on a layout (or on a single subsystem, to be
// embedded later).
class OperatorMatrix {
 public:
  OperatorMatrix(SubsystemLayout layout, ComplexMatrix entries)
      : layout_(std::move(layout)), m_(std::move(entries)) {
    if (m_.rows() != m_.cols() ||
        static_cast<std::size_t>(m_.rows()) != layout_.dim())
      throw layout_error("operator dimensions do not match layout");
  }

  static OperatorMatrix identity(SubsystemLayout layout) {
    const auto n = static_cast<Eigen::Index>(layout.dim());
    return OperatorMatrix(std::move(layout), ComplexMatrix::Identity(n, n));
  }

  const SubsystemLayout& layout() const { return layout_; }
  const ComplexMatrix& matrix() const { return m_; }

  OperatorMatrix adjoint() const { return OperatorMatrix(layout_, m_.adjoint()); }

  friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.layout() != b.layout()) throw layout_error("operator product across different layouts");
    return OperatorMatrix(a.layout_, a.m_ * b.m_);
  }
  friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.layout() != b.layout()) throw layout_error("operator sum across different layouts");
    return OperatorMatrix(a.layout_, a.m_ + b.m_);
  }
  friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.layout() != b.layout()) throw layout_error("operator difference across different layouts");
    return OperatorMatrix(a.layout_, a.m_ - b.m_);
  }
  friend OperatorMatrix operator*(Complex c, const OperatorMatrix& a) {
    return OperatorMatrix(a.layout_, c * a.m_);
  }

 private:
  SubsystemLayout layout_;
  ComplexMatrix m_;
};

inline StateVector apply(const OperatorMatrix& op, const StateVector& state) {
  if (op.layout() != state.layout()) throw layout_error("operator/state layout mismatch");
  return StateVector(state.layout(), op.matrix() * state.amps());
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// Hermitian PSD matrix over a layout; trace carries probability weight where
// relevant, so it is not forced to 1 here.
class DensityMatrix {
 public:
  DensityMatrix(SubsystemLayout layout, ComplexMatrix entries)
      : layout_(std::move(layout)), m_(std::move(entries)) {
    if (m_.rows() != m_.cols() ||
        static_cast<std::size_t>(m_.rows()) != layout_.dim())
      throw layout_error("density matrix dimensions do not match layout");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    if (hermiticity_defect(m_) > kAmpTol * scale)
      throw validation_error("density matrix is not Hermitian within tolerance");
    if (std::abs(m_.trace().imag()) > kAmpTol * scale)
      throw validation_error("density matrix trace is not real within tolerance");
  }

  static DensityMatrix from_pure(const StateVector& psi) {
    return DensityMatrix(psi.layout(), psi.amps() * psi.amps().adjoint());
  }

  const SubsystemLayout& layout() const { return layout_; }
  const ComplexMatrix& matrix() const { return m_; }
  double trace() const { return m_.trace().real(); }
  Complex entry(std::size_t row, std::size_t col) const {
    return m_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }

  DensityMatrix normalized() const {
    const double tr = trace();
    if (!(tr > 1e-150)) throw numerical_error("cannot normalize a zero-trace density matrix");
    return DensityMatrix(layout_, m_ / tr);
  }

 private:
  SubsystemLayout layout_;
  ComplexMatrix m_;
};

inline double min_eigenvalue(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(rho.matrix());
  return solver.eigenvalues().minCoeff();
}

// Kronecker product of states; amplitude ordering is row-major in the listed
// factor order. Labels must be pairwise disjoint.
inline StateVector tensor(std::span<const StateVector> factors) {
  if (factors.empty()) throw layout_error("tensor of zero factors");
  std::vector<Subsystem> subs;
  for (const auto& f : factors)
    subs.insert(subs.end(), f.layout().subsystems().begin(), f.layout().subsystems().end());
  SubsystemLayout layout(std::move(subs));  // rejects duplicate labels
  ComplexVector acc = factors[0].amps();
  for (std::size_t f = 1; f < factors.size(); ++f) {
    const ComplexVector& next = factors[f].amps();
    ComplexVector merged(acc.size() * next.size());
    for (Eigen::Index i = 0; i < acc.size(); ++i)
      for (Eigen::Index j = 0; j < next.size(); ++j)
        merged(i * next.size() + j) = acc(i) * next(j);
    acc = std::move(merged);
  }
  return StateVector(std::move(layout), std::move(acc));
}

template <typename... States>
StateVector tensor(const StateVector& first, const States&... rest) {
  const StateVector factors[] = {first, rest...};
  return tensor(std::span<const StateVector>(factors, 1 + sizeof...(rest)));
}

// Embeds a single-subsystem operator into a larger layout as
// I (x) ... (x) op (x) ... (x) I at the target label's slot.
inline OperatorMatrix embed(const OperatorMatrix& op, std::string_view target_label,
                            const SubsystemLayout& layout) {
  const std::size_t pos = layout.position(target_label);
  const int target_dim = layout.subsystem(pos).dim;
  if (static_cast<std::size_t>(target_dim) != op.layout().dim())
    throw layout_error("operator dimension does not match subsystem '" +
                       std::string(target_label) + "'");
  std::size_t pre = 1, post = 1;
  for (std::size_t i = 0; i < pos; ++i)
    pre *= static_cast<std::size_t>(layout.subsystem(i).dim);
  for (std::size_t i = pos + 1; i < layout.subsystem_count(); ++i)
    post *= static_cast<std::size_t>(layout.subsystem(i).dim);
  const ComplexMatrix pre_id = ComplexMatrix::Identity(static_cast<Eigen::Index>(pre),
                                                       static_cast<Eigen::Index>(pre));
  const ComplexMatrix post_id = ComplexMatrix::Identity(static_cast<Eigen::Index>(post),
                                                        static_cast<Eigen::Index>(post));
  ComplexMatrix mid = Eigen::kroneckerProduct(pre_id, op.matrix());
  ComplexMatrix full = Eigen::kroneckerProduct(mid, post_id);
  return OperatorMatrix(layout, std::move(full));
}

namespace detail {

// Partitions a layout into kept and traced positions, in layout order.
struct TracePartition {
  std::vector<std::size_t> kept_offsets;    // flat-index contribution per reduced index
  std::vector<std::size_t> traced_offsets;  // flat-index contribution per traced index
  SubsystemLayout reduced_layout;
};

inline TracePartition make_trace_partition(const SubsystemLayout& layout,
                                           std::span<const std::string> keep) {
  if (keep.empty()) throw layout_error("partial trace must keep at least one subsystem");
  for (const auto& label : keep) layout.position(label);  // validates
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = i + 1; j < keep.size(); ++j)
      if (keep[i] == keep[j]) throw layout_error("duplicate label in keep set");

  std::vector<std::size_t> kept_pos, traced_pos;
  std::vector<Subsystem> kept_subs;
  for (std::size_t p = 0; p < layout.subsystem_count(); ++p) {
    const auto& sub = layout.subsystem(p);
    const bool keep_it = std::find(keep.begin(), keep.end(), sub.label) != keep.end();
    (keep_it ? kept_pos : traced_pos).push_back(p);
    if (keep_it) kept_subs.push_back(sub);
  }

  auto offsets_for = [&](const std::vector<std::size_t>& positions) {
    std::size_t total = 1;
    for (auto p : positions) total *= static_cast<std::size_t>(layout.subsystem(p).dim);
    std::vector<std::size_t> offsets(total, 0);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx, offset = 0;
      for (auto it = positions.rbegin(); it != positions.rend(); ++it) {
        const auto d = static_cast<std::size_t>(layout.subsystem(*it).dim);
        offset += (rest % d) * layout.stride(*it);
        rest /= d;
      }
      offsets[idx] = offset;
    }
    return offsets;
  };

  TracePartition part{offsets_for(kept_pos), offsets_for(traced_pos),
                      SubsystemLayout(std::move(kept_subs))};
  return part;
}

}  // namespace detail

// Reduces rho to the kept subsystems (in layout order) by summing over the
// complement's basis. Trace, Hermiticity and positivity are preserved.
inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   std::span<const std::string> keep) {
  const auto part = detail::make_trace_partition(rho.layout(), keep);
  const auto dk = static_cast<Eigen::Index>(part.kept_offsets.size());
  ComplexMatrix out = ComplexMatrix::Zero(dk, dk);
  const ComplexMatrix& in = rho.matrix();
  for (Eigen::Index i = 0; i < dk; ++i)
    for (Eigen::Index j = 0; j < dk; ++j) {
      Complex sum = 0.0;
      for (std::size_t t : part.traced_offsets)
        sum += in(static_cast<Eigen::Index>(part.kept_offsets[i] + t),
                  static_cast<Eigen::Index>(part.kept_offsets[j] + t));
      out(i, j) = sum;
    }
  return DensityMatrix(part.reduced_layout, std::move(out));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   std::initializer_list<std::string> keep) {
  return partial_trace(rho, std::span<const std::string>(keep.begin(), keep.size()));
}

// Partial trace of a pure state's projector, computed without materializing
// |psi><psi|. Equivalent to partial_trace(DensityMatrix::from_pure(psi), keep).
inline DensityMatrix reduced_pure(const StateVector& psi,
                                  std::span<const std::string> keep) {
  const auto part = detail::make_trace_partition(psi.layout(), keep);
  const auto dk = static_cast<Eigen::Index>(part.kept_offsets.size());
  ComplexMatrix out = ComplexMatrix::Zero(dk, dk);
  for (Eigen::Index i = 0; i < dk; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      Complex sum = 0.0;
      for (std::size_t t : part.traced_offsets)
        sum += psi.amp(part.kept_offsets[static_cast<std::size_t>(i)] + t) *
               std::conj(psi.amp(part.kept_offsets[static_cast<std::size_t>(j)] + t));
      out(i, j) = sum;
      out(j, i) = std::conj(sum);
    }
  return DensityMatrix(part.reduced_layout, std::move(out));
}

inline DensityMatrix reduced_pure(const StateVector& psi,
                                  std::initializer_list<std::string> keep) {
  return reduced_pure(psi, std::span<const std::string>(keep.begin(), keep.size()));
}

// Ladder operator on a truncated Fock space |0>..|n_max>: <n-1|a|n> = sqrt(n).
inline OperatorMatrix annihilation(int n_max) {
  if (n_max < 1) throw validation_error("annihilation requires n_max >= 1");
  const int d = n_max + 1;
  ComplexMatrix a = ComplexMatrix::Zero(d, d);
  for (int n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return OperatorMatrix(SubsystemLayout{{"mode", d}}, std::move(a));
}

// <target|rho|target> / tr(rho), real in [0,1]. The target must be normalized.
inline double fidelity_pure(const DensityMatrix& rho, const StateVector& target) {
  if (rho.layout() != target.layout())
    throw layout_error("fidelity across different layouts");
  if (std::abs(target.norm() - 1.0) > 1e-9)
    throw validation_error("fidelity target state is not normalized");
  const double tr = rho.trace();
  if (!(tr > 1e-150)) throw numerical_error("fidelity undefined for zero-trace density matrix");
  const Complex overlap = (target.amps().adjoint() * rho.matrix() * target.amps())(0);
  const double value = overlap.real() / tr;
  if (std::abs(overlap.imag()) / tr > kPosTol || value < -kPosTol || value > 1.0 + kPosTol)
    throw numerical_error("fidelity outside [0,1] beyond tolerance");
  return std::clamp(value, 0.0, 1.0);
}

}  // namespace cavcon
