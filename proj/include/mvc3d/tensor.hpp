#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <span>

#include "mvc3d/common.hpp"

namespace mvc3d {

// Dense row-major tensor handle. Copies share storage (and gradient), so a
// handle captured by a tape closure aliases the parameter the optimizer
// updates. Use clone() for an independent copy.
template <class S>
class TensorT {
 public:
  TensorT() : TensorT(Shape{}) {}

  explicit TensorT(Shape shape) {
    check_shape(shape, "tensor");
    auto st = std::make_shared<Storage>();
    st->shape = std::move(shape);
    st->value.assign(static_cast<std::size_t>(numel(st->shape)), S(0));
    st->id = next_id();
    st_ = std::move(st);
  }

  TensorT(Shape shape, std::vector<S> values) : TensorT(std::move(shape)) {
    if (static_cast<Index>(values.size()) != size())
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape_ref()) + " (" +
                                  std::to_string(size()) + " elements)");
    st_->value = std::move(values);
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

  static TensorT full(Shape shape, S v) {
    TensorT t(std::move(shape));
    for (S& x : t.st_->value) x = v;
    return t;
  }

  static TensorT scalar(S v) { return full(Shape{}, v); }

  static TensorT randn(Shape shape, std::mt19937_64& rng, S stddev = S(1), S mean = S(0)) {
    TensorT t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (S& x : t.st_->value) x = mean + stddev * static_cast<S>(dist(rng));
    return t;
  }

  const Shape& shape() const { return shape_ref(); }
  int rank() const { return static_cast<int>(shape_ref().size()); }
  Index size() const { return static_cast<Index>(st_->value.size()); }
  Index dim(int axis) const { return shape_ref().at(static_cast<std::size_t>(axis)); }
  Shape strides() const { return row_major_strides(shape_ref()); }

  S* data() { return st_->value.data(); }
  const S* data() const { return st_->value.data(); }
  std::span<S> values() { return st_->value; }
  std::span<const S> values() const { return st_->value; }
  S& operator[](Index i) { return st_->value[static_cast<std::size_t>(i)]; }
  const S& operator[](Index i) const { return st_->value[static_cast<std::size_t>(i)]; }

  S& at(std::initializer_list<Index> idx) {
    return st_->value[static_cast<std::size_t>(flat_index(idx))];
  }
  const S& at(std::initializer_list<Index> idx) const {
    return st_->value[static_cast<std::size_t>(flat_index(idx))];
  }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool f) { st_->requires_grad = f; }

  bool has_grad() const { return !st_->grad.empty(); }

  std::span<S> grad() {
    ensure_grad();
    return st_->grad;
  }
  std::span<const S> grad() const {
    if (!has_grad())
      throw std::runtime_error("tensor: gradient not allocated");
    return st_->grad;
  }

  void zero_grad() {
    if (has_grad())
      std::fill(st_->grad.begin(), st_->grad.end(), S(0));
  }

  void accumulate_grad(std::span<const S> g) {
    if (static_cast<Index>(g.size()) != size())
      throw std::invalid_argument("tensor: gradient size " + std::to_string(g.size()) +
                                  " does not match " + std::to_string(size()));
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) st_->grad[i] += g[i];
  }

  TensorT clone() const {
    TensorT t(shape_ref(), std::vector<S>(st_->value));
    t.st_->requires_grad = st_->requires_grad;
    return t;
  }

  bool same_storage(const TensorT& other) const { return st_ == other.st_; }
  std::uint64_t id() const { return st_->id; }

  std::uint64_t tape_id() const { return st_->tape_id; }
  void set_tape_id(std::uint64_t id) { st_->tape_id = id; }

  bool all_finite() const {
    for (S v : st_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::uint64_t tape_id = 0;
  };

  const Shape& shape_ref() const { return st_->shape; }

  void ensure_grad() {
    if (!st_->grad.empty()) return;
    st_->grad.assign(st_->value.size(), S(0));
  }

  Index flat_index(std::initializer_list<Index> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw std::invalid_argument("tensor: " + std::to_string(idx.size()) +
                                  " indices for rank " + std::to_string(rank()));
    Index flat = 0;
    const Shape& sh = shape_ref();
    std::size_t k = 0;
    for (Index i : idx) {
      if (i < 0 || i >= sh[k])
        throw std::out_of_range("tensor: index " + std::to_string(i) + " out of range for axis " +
                                std::to_string(k) + " of shape " + shape_str(sh));
      flat = flat * sh[k] + i;
      ++k;
    }
    return flat;
  }

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  std::shared_ptr<Storage> st_;
};

// Binary tensor block: magic, version, dtype, rank, extents, raw little-endian data.
namespace tensor_io {

inline constexpr char kMagic[4] = {'M', 'V', 'T', 'B'};
inline constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor read: truncated stream");
  return v;
}

template <class S>
constexpr std::uint8_t dtype_code() {
  if constexpr (std::is_same_v<S, float>) return 1;
  else return 2;
}

}  // namespace tensor_io

template <class S>
void write_tensor(std::ostream& os, const TensorT<S>& t) {
  using namespace tensor_io;
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, dtype_code<S>());
  write_pod(os, static_cast<std::uint8_t>(t.rank()));
  for (Index e : t.shape()) write_pod(os, static_cast<std::uint64_t>(e));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * static_cast<Index>(sizeof(S))));
  if (!os) throw std::runtime_error("tensor write: stream failure");
}

template <class S>
TensorT<S> read_tensor(std::istream& is) {
  using namespace tensor_io;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("tensor read: bad magic");
  const auto version = read_pod<std::uint16_t>(is);
  if (version != kVersion)
    throw std::runtime_error("tensor read: unsupported version " + std::to_string(version));
  const auto dtype = read_pod<std::uint8_t>(is);
  if (dtype != 1 && dtype != 2)
    throw std::runtime_error("tensor read: unknown dtype code " + std::to_string(dtype));
  const auto rank = read_pod<std::uint8_t>(is);
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<Index>(read_pod<std::uint64_t>(is));
  TensorT<S> t(shape);
  const Index n = t.size();
  if (dtype == tensor_io::dtype_code<S>()) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(n * static_cast<Index>(sizeof(S))));
  } else if (dtype == 1) {
    std::vector<float> buf(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
    for (Index i = 0; i < n; ++i) t[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
  } else {
    std::vector<double> buf(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
    for (Index i = 0; i < n; ++i) t[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
  }
  if (!is) throw std::runtime_error("tensor read: truncated data");
  return t;
}

}  // namespace mvc3d
