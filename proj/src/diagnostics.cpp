#include "dgnet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "dgnet/graph.hpp"
#include "dgnet/losses.hpp"
#include "dgnet/rng.hpp"
#include "dgnet/trainer.hpp"

namespace dgnet {

namespace {

using Builder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

// Values bounded away from zero so ReLU/abs kinks are never straddled.
Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, double gap = 1e-2) {
  Tensor t(shape);
  for (auto& v : t.data()) {
    do {
      v = rng.uniform(lo, hi);
    } while (std::abs(v) < gap);
  }
  return t;
}

double projected(Graph& g, const Builder& build, const std::vector<Tensor>& inputs, const Tensor& proj,
                 NodeId* out_id, std::vector<NodeId>* leaf_ids) {
  std::vector<NodeId> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  const NodeId out = build(g, leaves);
  if (out_id) *out_id = out;
  if (leaf_ids) *leaf_ids = leaves;
  double s = 0.0;
  const Tensor& v = g.value(out);
  for (std::size_t i = 0; i < v.size(); ++i) s += proj[i] * v[i];
  return s;
}

GradCheckResult check_op(const Builder& build, std::vector<Tensor> inputs, Rng& rng, double eps) {
  Graph probe;
  NodeId out;
  std::vector<NodeId> leaves;
  {
    std::vector<NodeId> ids;
    for (const auto& t : inputs) ids.push_back(probe.leaf(t));
    out = build(probe, ids);
    leaves = ids;
  }
  const Tensor proj = random_tensor(probe.value(out).shape(), rng);
  probe.backward(out, proj);
  std::vector<Tensor> analytic;
  for (auto id : leaves) analytic.push_back(probe.grad(id));

  std::vector<Tensor*> ptrs;
  for (auto& t : inputs) ptrs.push_back(&t);
  auto loss = [&] {
    Graph g;
    return projected(g, build, inputs, proj, nullptr, nullptr);
  };
  return grad_check(loss, ptrs, analytic, eps);
}

GradCheckResult check_loss_terms(Rng& rng, double eps, bool at_hinge) {
  const std::size_t batch = 6;
  LossConfig cfg;
  cfg.margin = 0.5;
  cfg.weights = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
  std::vector<int> y(batch);
  Tensor d({batch}), p({batch});
  for (std::size_t i = 0; i < batch; ++i) {
    y[i] = static_cast<int>(i % 2);
    if (at_hinge) {
      d[i] = cfg.margin + (i % 4 < 2 ? 1e-3 : -1e-3);
    } else {
      do {
        d[i] = rng.uniform(0.02, 0.98);
      } while (std::abs(d[i] - cfg.margin) < 1e-3);
    }
    p[i] = rng.uniform(0.05, 0.95);
  }
  const LossGradient lg = total_loss_gradient(d.values(), p.values(), y, cfg);
  std::vector<Tensor> analytic{Tensor::vector(lg.d), Tensor::vector(lg.p)};
  std::vector<Tensor*> ptrs{&d, &p};
  auto loss = [&] { return total_loss(d.values(), p.values(), y, cfg).total; };
  return grad_check(loss, ptrs, analytic, eps);
}

}  // namespace

std::vector<PrimitiveCheck> check_primitives(std::size_t seeds, double eps) {
  struct Case {
    std::string name;
    std::function<std::vector<Tensor>(Rng&)> inputs;
    Builder build;
  };
  const std::vector<Case> cases{
      {"conv2d_s1_p1",
       [](Rng& r) { return std::vector{random_tensor({2, 5, 6}, r), random_tensor({3, 2, 3, 3}, r), random_tensor({3}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.conv2d(in[0], in[1], in[2], 1, 1); }},
      {"conv2d_s2_p0",
       [](Rng& r) { return std::vector{random_tensor({2, 7, 7}, r), random_tensor({2, 2, 3, 3}, r), random_tensor({2}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.conv2d(in[0], in[1], in[2], 2, 0); }},
      {"relu", [](Rng& r) { return std::vector{random_tensor({3, 4, 4}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.relu(in[0]); }},
      {"maxpool2", [](Rng& r) { return std::vector{random_tensor({2, 4, 6}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.maxpool2(in[0]); }},
      {"linear",
       [](Rng& r) { return std::vector{random_tensor({7}, r), random_tensor({5, 7}, r), random_tensor({5}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.linear(in[0], in[1], in[2]); }},
      {"sigmoid", [](Rng& r) { return std::vector{random_tensor({6}, r, -4.0, 4.0)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.sigmoid(in[0]); }},
      {"flatten", [](Rng& r) { return std::vector{random_tensor({2, 3, 2}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.flatten(in[0]); }},
      {"mul", [](Rng& r) { return std::vector{random_tensor({5}, r), random_tensor({5}, r)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.mul(in[0], in[1]); }},
      {"abs_diff",
       [](Rng& r) {
         Tensor a = random_tensor({6}, r);
         Tensor b = random_tensor({6}, r);
         for (std::size_t i = 0; i < a.size(); ++i) {
           if (std::abs(a[i] - b[i]) < 1e-2) b[i] = a[i] + 0.05;
         }
         return std::vector{a, b};
       },
       [](Graph& g, const std::vector<NodeId>& in) { return g.abs_diff(in[0], in[1]); }},
      {"cosine_distance",
       [](Rng& r) { return std::vector{random_tensor({6}, r, 0.05, 1.0), random_tensor({6}, r, 0.05, 1.0)}; },
       [](Graph& g, const std::vector<NodeId>& in) { return g.cosine_distance(in[0], in[1]); }},
  };

  std::vector<PrimitiveCheck> out;
  for (const auto& c : cases) {
    PrimitiveCheck pc{c.name, 0.0, 0};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng = Rng::stream(s, {0x9c});
      const auto r = check_op(c.build, c.inputs(rng), rng, eps);
      pc.max_relative_error = std::max(pc.max_relative_error, r.max_relative_error);
      pc.coordinates += r.coordinates_checked;
    }
    out.push_back(pc);
  }
  for (bool hinge : {false, true}) {
    PrimitiveCheck pc{hinge ? "total_loss_at_hinge" : "total_loss", 0.0, 0};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng = Rng::stream(s, {0x10});
      const auto r = check_loss_terms(rng, eps, hinge);
      pc.max_relative_error = std::max(pc.max_relative_error, r.max_relative_error);
      pc.coordinates += r.coordinates_checked;
    }
    out.push_back(pc);
  }
  return out;
}

GradCheckResult check_network(const NetworkSpec& spec, std::uint64_t seed, double eps,
                              std::optional<std::size_t> coords_per_tensor, std::size_t pairs) {
  NetworkParams params = build_network(spec, seed);
  Rng rng = Rng::stream(seed, {0x4e});
  // Small nonzero biases keep units away from exact ReLU ties.
  for (std::size_t t = 1; t < params.tensors.size(); t += 2) {
    for (auto& v : params.tensors[t].data()) v = rng.uniform(0.0, 0.1);
  }
  std::vector<Tensor> a, b;
  std::vector<int> y;
  for (std::size_t i = 0; i < pairs; ++i) {
    Tensor xa(spec.input), xb(spec.input);
    for (auto& v : xa.data()) v = rng.uniform();
    // Positives share most of their content so the distance stays small.
    for (std::size_t k = 0; k < xb.size(); ++k) xb[k] = i % 2 == 0 ? std::clamp(xa[k] + 0.1 * rng.normal(), 0.0, 1.0) : rng.uniform();
    a.push_back(std::move(xa));
    b.push_back(std::move(xb));
    y.push_back(i % 2 == 0 ? 1 : 0);
  }
  LossConfig cfg;
  cfg.margin = 0.5;
  const BatchResult analytic = forward_backward(params, a, b, y, cfg);
  std::vector<Tensor*> ptrs;
  for (auto& t : params.tensors) ptrs.push_back(&t);
  std::uint64_t signature = 0;
  auto loss = [&] {
    Graph graph;
    const auto bound = bind_params(graph, params);
    std::vector<double> d(pairs), p(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
      const auto ea = embed(graph, spec, bound, graph.constant(a[i]));
      const auto eb = embed(graph, spec, bound, graph.constant(b[i]));
      d[i] = graph.value(graph.cosine_distance(ea.embedding, eb.embedding))[0];
      p[i] = graph.value(head_forward(graph, spec, bound, ea.embedding, eb.embedding))[0];
    }
    // The loss itself has kinks at the hinge and at the BCE clamp.
    signature = graph.branch_signature();
    for (std::size_t i = 0; i < pairs; ++i) {
      const bool hinge = d[i] < cfg.margin;
      const bool clamped = p[i] < cfg.bce_clamp_eps || p[i] > 1.0 - cfg.bce_clamp_eps;
      signature = (signature ^ (hinge ? 1u : 0u) ^ (clamped ? 2u : 0u)) * 0x100000001b3ULL;
    }
    return total_loss(d, p, y, cfg).total;
  };
  return grad_check(loss, ptrs, analytic.grads, eps, coords_per_tensor, seed, [&] { return signature; });
}

}  // namespace dgnet
