#include "spongelab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "spongelab/errors.hpp"

namespace spongelab::ag {

Node Node::leaf(Tensor value, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->grad = Tensor(value.rows(), value.cols());
  impl->value = std::move(value);
  impl->requires_grad = requires_grad;
  return Node(std::move(impl));
}

Node Node::make_op(Tensor value, std::vector<Node> parents, std::function<void(Impl&)> backward,
                   const char* name) {
  require_finite(value, name);
  auto impl = std::make_shared<Impl>();
  impl->grad = Tensor(value.rows(), value.cols());
  impl->value = std::move(value);
  for (auto& p : parents) {
    impl->requires_grad = impl->requires_grad || p.requires_grad();
    impl->parents.push_back(std::move(p.impl_));
  }
  if (impl->requires_grad) impl->backward = std::move(backward);
  return Node(std::move(impl));
}

namespace {

void accumulate(Tensor& into, const Tensor& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

void require_scalar(const Tensor& t, const char* what) {
  if (t.rows() != 1 || t.cols() != 1) {
    throw ValidationError(std::string(what) + " expects a scalar [1x1], got " + t.shape_str());
  }
}

}  // namespace

Node matmul(const Node& a, const Node& b) {
  Tensor out = spongelab::matmul(a.value(), b.value());
  return Node::make_op(std::move(out), {a, b}, [](Node::Impl& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, matmul_nt(self.grad, pb.value));
    if (pb.requires_grad) accumulate(pb.grad, matmul_tn(pa.value, self.grad));
  }, "matmul");
}

Node add_bias(const Node& x, const Node& bias) {
  Tensor out = spongelab::add_bias(x.value(), bias.value());
  return Node::make_op(std::move(out), {x, bias}, [](Node::Impl& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) accumulate(px.grad, self.grad);
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.rows(); ++i) {
        auto g = self.grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) pb.grad[j] += g[j];
      }
    }
  }, "add_bias");
}

Node relu(const Node& x) {
  return Node::make_op(spongelab::relu(x.value()), {x}, [](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (std::size_t i = 0; i < px.grad.size(); ++i) {
      if (px.value[i] > 0.0) px.grad[i] += self.grad[i];
    }
  }, "relu");
}

Node softmax_cross_entropy(const Node& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t m = z.rows(), c = z.cols();
  if (m == 0) throw ValidationError("softmax_cross_entropy needs at least one row");
  if (labels.size() != m) {
    throw ValidationError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(m) + " rows");
  }
  Tensor probs(m, c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ValidationError("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(c) + ")");
    }
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs(i, j) = std::exp(row[j] - mx);
      denom += probs(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs(i, j) /= denom;
    total += std::log(denom) - (row[y] - mx);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return Node::make_op(Tensor(1, 1, total / static_cast<double>(m)), {logits},
                       [probs = std::move(probs), ys = std::move(ys)](Node::Impl& self) {
    auto& pz = *self.parents[0];
    if (!pz.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(ys.size());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      for (std::size_t j = 0; j < probs.cols(); ++j) {
        const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
        pz.grad(i, j) += g * (probs(i, j) - onehot);
      }
    }
  }, "softmax_cross_entropy");
}

Node sum(const Node& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Node::make_op(Tensor(1, 1, s), {x}, [](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (double& g : px.grad.data()) g += self.grad[0];
  }, "sum");
}

Node mean(const Node& x) {
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) throw ValidationError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Node::make_op(Tensor(1, 1, s / n), {x}, [n](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    const double g = self.grad[0] / n;
    for (double& v : px.grad.data()) v += g;
  }, "mean");
}

Node add(const Node& a, const Node& b) {
  require_scalar(a.value(), "add");
  require_scalar(b.value(), "add");
  return Node::make_op(Tensor(1, 1, a.value()[0] + b.value()[0]), {a, b}, [](Node::Impl& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad[0] += self.grad[0];
    }
  }, "add");
}

Node sub(const Node& a, const Node& b) {
  require_scalar(a.value(), "sub");
  require_scalar(b.value(), "sub");
  return Node::make_op(Tensor(1, 1, a.value()[0] - b.value()[0]), {a, b}, [](Node::Impl& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad[0] += self.grad[0];
    if (self.parents[1]->requires_grad) self.parents[1]->grad[0] -= self.grad[0];
  }, "sub");
}

Node scale(const Node& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return Node::make_op(std::move(out), {x}, [factor](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += factor * self.grad[i];
  }, "scale");
}

Node select_rows(const Node& x, std::span<const std::size_t> rows) {
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out = spongelab::select_rows(x.value(), idx);
  return Node::make_op(std::move(out), {x}, [idx = std::move(idx)](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = self.grad.row(i);
      auto dst = px.grad.row(idx[i]);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  }, "select_rows");
}

Node l0_approx(const Node& x, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("l0_approx requires sigma > 0");
  Tensor out = x.value();
  for (double& v : out.data()) {
    const double sq = v * v;
    v = sq / (sq + sigma);
  }
  return Node::make_op(std::move(out), {x}, [sigma](Node::Impl& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    // d/dv v²/(v²+σ) = 2vσ / (v²+σ)²
    for (std::size_t i = 0; i < px.grad.size(); ++i) {
      const double v = px.value[i];
      const double d = v * v + sigma;
      px.grad[i] += self.grad[i] * (2.0 * v * sigma) / (d * d);
    }
  }, "l0_approx");
}

void backward(const Node& loss) {
  if (!loss.valid()) throw ValidationError("backward on an empty node");
  require_scalar(loss.value(), "backward");

  // Iterative post-order DFS gives a topological order (parents first).
  using Impl = Node::Impl;
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack{{loss.impl_.get(), 0}};
  seen.insert(loss.impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Impl* n : order) n->grad.fill(0.0);
  loss.impl_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->requires_grad && (*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace spongelab::ag
