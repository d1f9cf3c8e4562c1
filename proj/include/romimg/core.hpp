#ifndef ROMIMG_CORE_HPP
#define ROMIMG_CORE_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace romimg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Invalid input: bad shapes, non-physical parameters, malformed files.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The numbers went wrong: instability, NaN, loss of definiteness.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Block Cholesky hit a Schur complement that is not positive definite.
class FactorizationError : public NumericalError {
 public:
  FactorizationError(int block, double min_eig, double threshold)
      : NumericalError("block Cholesky failed at block " + std::to_string(block) +
                       ": min eigenvalue " + std::to_string(min_eig) + " <= " +
                       std::to_string(threshold)),
        block_(block) {}
  int block() const noexcept { return block_; }

 private:
  int block_;
};

// Process exit codes used by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

// FNV-1a over the raw bytes of a sequence of doubles; used for provenance.
class Hasher {
 public:
  void add(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ULL;
    }
  }
  void add(double v) { add(&v, sizeof v); }
  void add(std::int64_t v) { add(&v, sizeof v); }
  void add(const std::string& s) { add(s.data(), s.size()); }
  void add(const Matrix& m) {
    add(static_cast<std::int64_t>(m.rows()));
    add(static_cast<std::int64_t>(m.cols()));
    add(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 1469598103934665603ULL;
};

inline std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Relative Frobenius distance, guarded against a zero reference.
inline double rel_diff(const Matrix& a, const Matrix& ref) {
  const double denom = ref.norm();
  const double num = (a - ref).norm();
  return denom > 0.0 ? num / denom : num;
}

// Scalar Chebyshev polynomial T_k(x) by the three-term recurrence.
inline double chebyshev_t(int k, double x) {
  if (k == 0) return 1.0;
  double t0 = 1.0, t1 = x;
  for (int j = 1; j < k; ++j) {
    const double t2 = 2.0 * x * t1 - t0;
    t0 = t1;
    t1 = t2;
  }
  return t1;
}

namespace detail {

// Little-endian binary helpers for the on-disk formats.
template <class T>
void put_le(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ValidationError("truncated binary input");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail
}  // namespace romimg

#endif  // ROMIMG_CORE_HPP
