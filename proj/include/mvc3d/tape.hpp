#pragma once

#include <functional>

#include "mvc3d/tensor.hpp"

namespace mvc3d {

// Append-only record of differentiable ops. backward() seeds d(loss)/d(loss)=1
// and replays the recorded closures newest-first; each closure reads its
// output's gradient and accumulates into its inputs' gradients, so shared
// subexpressions add up instead of overwriting. A disabled tape records
// nothing and op outputs do not require grad (inference mode).
template <class S>
class TapeT {
 public:
  TapeT() : TapeT(true) {}
  explicit TapeT(bool enabled) : enabled_(enabled), id_(next_id()) {}

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT disabled() { return TapeT(false); }

  bool enabled() const { return enabled_; }
  std::uint64_t id() const { return id_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Called by ops after computing `out` from tensors with ids `inputs`.
  // `backward` must early-return when out has no gradient yet.
  void record(std::vector<std::uint64_t> inputs, TensorT<S>& out, std::function<void()> backward) {
    out.set_requires_grad(true);
    out.set_tape_id(id_);
    nodes_.push_back(Node{std::move(inputs), out.id(), std::move(backward)});
  }

  void backward(TensorT<S>& loss) {
    if (loss.size() != 1)
      throw std::invalid_argument("backward: target has " + std::to_string(loss.size()) +
                                  " elements, expected a scalar");
    if (loss.tape_id() != id_)
      throw std::invalid_argument("backward: tensor not on tape");
    const S one = S(1);
    loss.accumulate_grad(std::span<const S>(&one, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<std::uint64_t> inputs;
    std::uint64_t output;
    std::function<void()> backward;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  bool enabled_;
  std::uint64_t id_;
  std::vector<Node> nodes_;
};

}  // namespace mvc3d
