#include "siatrans/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gemm.hpp"

namespace siatrans {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(std::function<void()> fn) { Tape::active()->record(std::move(fn)); }

std::size_t norm_axis(const Tensor& x, int axis) {
  const int rank = static_cast<int>(x.dim());
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  return static_cast<std::size_t>(a);
}

// (outer, extent, inner) decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  const bool track = tracking({&x});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), deriv] {
      const auto& gy = yn->grad_buffer();
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) {
    throw DimensionError("matmul needs rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.size(-2), k = a.size(-1), k2 = b.size(-2), n = b.size(-1);
  const Shape a_lead(a.shape().begin(), a.shape().end() - 2);
  const Shape b_lead(b.shape().begin(), b.shape().end() - 2);
  const bool a_shared = a_lead.empty() && !b_lead.empty();
  const bool b_shared = b_lead.empty();
  if (k != k2 || (!a_shared && !b_shared && a_lead != b_lead)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  Shape out_shape = a_shared ? b_lead : a_lead;
  const std::size_t batch = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm::nn(m, n, k, ad + (a_shared ? 0 : i * m * k), bd + (b_shared ? 0 : i * k * n),
             out.data() + i * m * n);
  }
  const bool track = tracking({&a, &b});
  Tensor y(std::move(out_shape), std::move(out), track);
  if (track) {
    record([an = a.node(), bn = b.node(), yn = y.node(), batch, m, n, k, a_shared, b_shared] {
      const auto& gy = yn->grad_buffer();
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < batch; ++i) {
          gemm::nt(m, n, k, gy.data() + i * m * n, bn->data.data() + (b_shared ? 0 : i * k * n),
                   ga.data() + (a_shared ? 0 : i * m * k));
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < batch; ++i) {
          gemm::tn(m, n, k, an->data.data() + (a_shared ? 0 : i * m * k), gy.data() + i * m * n,
                   gb.data() + (b_shared ? 0 : i * k * n));
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  const bool track = tracking({&a, &b});
  Tensor y(a.shape(), std::move(out), track);
  if (track) {
    record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& gy = yn->grad_buffer();
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        auto& g = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  const bool track = tracking({&a, &b});
  Tensor y(a.shape(), std::move(out), track);
  if (track) {
    record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& gy = yn->grad_buffer();
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool track = tracking({&a, &b});
  Tensor y(a.shape(), std::move(out), track);
  if (track) {
    record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& gy = yn->grad_buffer();
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * an->data[i];
      }
    });
  }
  return y;
}

Tensor add_broadcast(const Tensor& x, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - bs.size())) {
    throw DimensionError("add_broadcast: " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
  }
  const std::size_t inner = b.numel();
  const std::size_t reps = x.numel() / inner;
  std::vector<double> out(x.numel());
  const auto xd = x.data(), bd = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = xd[r * inner + i] + bd[i];
  }
  const bool track = tracking({&x, &b});
  Tensor y(xs, std::move(out), track);
  if (track) {
    record([xn = x.node(), bn = b.node(), yn = y.node(), reps, inner] {
      const auto& gy = yn->grad_buffer();
      if (xn->requires_grad) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t r = 0; r < reps; ++r) {
          for (std::size_t i = 0; i < inner; ++i) g[i] += gy[r * inner + i];
        }
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const bool track = tracking({&x});
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), track);
  if (track) {
    record([xn = x.node(), yn = y.node()] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    });
  }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& xs = x.shape();
  const std::size_t rank = xs.size();
  std::vector<bool> seen(rank, false);
  if (order.size() != rank) throw DimensionError("permute: order rank mismatch for " + shape_str(xs));
  for (auto o : order) {
    if (o >= rank || seen[o]) throw DimensionError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape ys(rank);
  for (std::size_t i = 0; i < rank; ++i) ys[i] = xs[order[i]];
  std::vector<std::size_t> xstride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) xstride[i - 1] = xstride[i] * xs[i];
  // Source offset for each output element.
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * xstride[order[i]];
    src[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < ys[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(src.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[src[i]];
  const bool track = tracking({&x});
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), src = std::move(src)] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += gy[i];
    });
  }
  return y;
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  std::vector<std::size_t> order(x.dim());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[norm_axis(x, axis0)], order[norm_axis(x, axis1)]);
  return permute(x, order);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t ax = norm_axis(parts[0], axis);
  Shape ys = parts[0].shape();
  ys[ax] = 0;
  for (const auto& p : parts) {
    auto ps = p.shape();
    if (ps.size() != ys.size()) throw DimensionError("concat: rank mismatch " + shape_str(ps));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (i != ax && ps[i] != parts[0].shape()[i]) {
        throw DimensionError("concat: non-axis extents differ " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(ps));
      }
    }
    ys[ax] += ps[ax];
  }
  const auto split = split_at(ys, ax);
  std::vector<double> out(shape_numel(ys));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.shape()[ax];
    const auto pd = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pd.begin() + o * len * split.inner, len * split.inner,
                  out.begin() + (o * split.extent + off) * split.inner);
    }
    off += len;
  }
  bool track = false;
  if (Tape::active()) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record([nodes = std::move(nodes), offsets = std::move(offsets), yn = y.node(), split, ax] {
      const auto& gy = yn->grad_buffer();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k]->requires_grad) continue;
        auto& g = nodes[k]->grad_buffer();
        const std::size_t len = nodes[k]->shape[ax];
        for (std::size_t o = 0; o < split.outer; ++o) {
          const std::size_t src = (o * split.extent + offsets[k]) * split.inner;
          const std::size_t dst = o * len * split.inner;
          for (std::size_t i = 0; i < len * split.inner; ++i) g[dst + i] += gy[src + i];
        }
      }
    });
  }
  return y;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = norm_axis(x, axis);
  const auto split = split_at(x.shape(), ax);
  if (start + length > split.extent || length == 0) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") out of range for " + shape_str(x.shape()));
  }
  Shape ys = x.shape();
  ys[ax] = length;
  std::vector<double> out(shape_numel(ys));
  const auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.begin() + (o * split.extent + start) * split.inner, length * split.inner,
                out.begin() + o * length * split.inner);
  }
  const bool track = tracking({&x});
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), split, start, length] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < split.outer; ++o) {
        const std::size_t dst = (o * split.extent + start) * split.inner;
        const std::size_t src = o * length * split.inner;
        for (std::size_t i = 0; i < length * split.inner; ++i) g[dst + i] += gy[src + i];
      }
    });
  }
  return y;
}

Tensor expand(const Tensor& x, int axis, std::size_t count) {
  const std::size_t ax = norm_axis(x, axis);
  const auto split = split_at(x.shape(), ax);
  if (split.extent != 1) {
    throw DimensionError("expand: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                         " is not extent 1");
  }
  Shape ys = x.shape();
  ys[ax] = count;
  std::vector<double> out(shape_numel(ys));
  const auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy_n(xd.begin() + o * split.inner, split.inner,
                  out.begin() + (o * count + c) * split.inner);
    }
  }
  const bool track = tracking({&x});
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), split, count] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t c = 0; c < count; ++c) {
          for (std::size_t i = 0; i < split.inner; ++i) {
            g[o * split.inner + i] += gy[(o * count + c) * split.inner + i];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0);
  const bool track = tracking({&x});
  Tensor y({1}, {s}, track);
  if (track) {
    record([xn = x.node(), yn = y.node()] {
      const double gy = yn->grad_buffer()[0];
      auto& g = xn->grad_buffer();
      for (auto& v : g) v += gy;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_axis(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(x, axis);
  const auto sp = split_at(x.shape(), ax);
  Shape ys = x.shape();
  ys[ax] = 1;
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(sp.extent);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        out[o * sp.inner + i] += xd[(o * sp.extent + e) * sp.inner + i];
      }
    }
  }
  for (auto& v : out) v *= inv;
  const bool track = tracking({&x});
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), sp, inv] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t e = 0; e < sp.extent; ++e) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            g[(o * sp.extent + e) * sp.inner + i] += gy[o * sp.inner + i] * inv;
          }
        }
      }
    });
  }
  return y;
}

Tensor max_axis(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(x, axis);
  const auto sp = split_at(x.shape(), ax);
  Shape ys = x.shape();
  ys[ax] = 1;
  std::vector<double> out(sp.outer * sp.inner);
  std::vector<std::size_t> arg(out.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      std::size_t best = o * sp.extent * sp.inner + i;
      for (std::size_t e = 1; e < sp.extent; ++e) {
        const std::size_t at = (o * sp.extent + e) * sp.inner + i;
        if (xd[at] > xd[best]) best = at;
      }
      out[o * sp.inner + i] = xd[best];
      arg[o * sp.inner + i] = best;
    }
  }
  const bool track = tracking({&x});
  Tensor y(std::move(ys), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), arg = std::move(arg)] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += gy[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// normalization and attention primitives

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(x, axis);
  const auto sp = split_at(x.shape(), ax);
  const auto xd = x.data();
  for (double v : xd) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      double mx = xd[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, xd[base + e * sp.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const double v = std::exp(xd[base + e * sp.inner] - mx);
        out[base + e * sp.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) out[base + e * sp.inner] /= z;
    }
  }
  const bool track = tracking({&x});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), sp] {
      const auto& gy = yn->grad_buffer();
      const auto& yd = yn->data;
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.extent * sp.inner + i;
          double dot = 0.0;
          for (std::size_t e = 0; e < sp.extent; ++e) {
            dot += gy[base + e * sp.inner] * yd[base + e * sp.inner];
          }
          for (std::size_t e = 0; e < sp.extent; ++e) {
            const std::size_t at = base + e * sp.inner;
            g[at] += yd[at] * (gy[at] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.size(-1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine shape must be (" + std::to_string(d) + "), got " +
                         shape_str(gain.shape()) + " / " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * is;
      xhat[r * d + i] = h;
      out[r * d + i] = h * gd[i] + bd[i];
    }
  }
  const bool track = tracking({&x, &gain, &bias});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record([xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node(), xhat = std::move(xhat),
            inv_std = std::move(inv_std), d, rows] {
      const auto& gy = yn->grad_buffer();
      if (gn->requires_grad) {
        auto& g = gn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < d; ++i) g[i] += gy[r * d + i] * xhat[r * d + i];
        }
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < d; ++i) g[i] += gy[r * d + i];
        }
      }
      if (xn->requires_grad) {
        auto& g = xn->grad_buffer();
        const auto& gd = gn->data;
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            const double dh = gy[r * d + i] * gd[i];
            m1 += dh;
            m2 += dh * xhat[r * d + i];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) {
            const double dh = gy[r * d + i] * gd[i];
            g[r * d + i] += inv_std[r] * (dh - m1 - xhat[r * d + i] * m2);
          }
        }
      }
    });
  }
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, BatchNormStats& stats,
                  bool training, double momentum, double eps) {
  if (x.dim() != 4) throw DimensionError("batch_norm expects (B,C,H,W), got " + shape_str(x.shape()));
  const std::size_t B = x.size(0), C = x.size(1), HW = x.size(2) * x.size(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gain, &bias, &stats.running_mean, &stats.running_var}) {
    if (t->shape() != Shape{C}) {
      throw DimensionError("batch_norm: per-channel tensor has shape " + shape_str(t->shape()) +
                           ", expected (" + std::to_string(C) + ")");
    }
  }
  if (training && B < 2) {
    throw NumericError("batch_norm: batch size 1 in training mode gives a degenerate variance");
  }
  const std::size_t count = B * HW;
  const auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<double> mu(C), inv_std(C);
  if (training) {
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xd.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xd.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = v / static_cast<double>(count - 1);
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    }
  } else {
    const auto rm = stats.running_mean.data();
    const auto rv = stats.running_var.data();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    }
  }
  std::vector<double> out(x.numel()), xhat(x.numel());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const double h = (xd[base + i] - mu[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = h * gd[c] + bd[c];
      }
    }
  }
  const bool track = tracking({&x, &gain, &bias});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record([xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node(), xhat = std::move(xhat),
            inv_std = std::move(inv_std), B, C, HW, count, training] {
      const auto& gy = yn->grad_buffer();
      const auto& gd = gn->data;
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            sum_dy += gy[base + i];
            sum_dy_xhat += gy[base + i] * xhat[base + i];
          }
        }
        if (gn->requires_grad) gn->grad_buffer()[c] += sum_dy_xhat;
        if (bn->requires_grad) bn->grad_buffer()[c] += sum_dy;
        if (!xn->requires_grad) continue;
        auto& g = xn->grad_buffer();
        const double k = gd[c] * inv_std[c];
        const double m1 = sum_dy / static_cast<double>(count);
        const double m2 = sum_dy_xhat / static_cast<double>(count);
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            g[base + i] += training ? k * (gy[base + i] - m1 - xhat[base + i] * m2) : k * gy[base + i];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// convolution, soft split, resampling

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding,
                           const char* op) {
  if (x.dim() != 4) throw DimensionError(std::string(op) + " expects (B,C,H,W), got " + shape_str(x.shape()));
  if (stride == 0 || kernel == 0) throw DimensionError(std::string(op) + ": kernel and stride must be positive");
  ConvGeometry g{x.size(1), x.size(2), x.size(3), kernel, stride, padding, 0, 0};
  if (g.height + 2 * padding < kernel || g.width + 2 * padding < kernel) {
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(kernel) +
                         " yields a non-positive output grid for " + shape_str(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - kernel) / stride + 1;
  return g;
}

// cols[(c*k + ki)*k + kj][oy*out_w + ox]
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t L = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * L;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t L = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * L;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (weight.dim() != 4 || weight.size(2) != weight.size(3)) {
    throw DimensionError("conv2d: weight must be (Cout,Cin,k,k), got " + shape_str(weight.shape()));
  }
  const auto g = conv_geometry(x, weight.size(2), stride, padding, "conv2d");
  if (weight.size(1) != g.channels) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(g.channels) +
                         " channels, weight " + shape_str(weight.shape()) + " expects " +
                         std::to_string(weight.size(1)));
  }
  const std::size_t B = x.size(0), Cout = weight.size(0);
  const std::size_t K = g.channels * g.kernel * g.kernel, L = g.out_h * g.out_w;
  if (bias.defined() && bias.shape() != Shape{Cout}) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  std::vector<double> out(B * Cout * L, 0.0);
  std::vector<double> cols(K * L);
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    im2col(xd + b * g.channels * g.height * g.width, g, cols.data());
    double* ob = out.data() + b * Cout * L;
    if (bias.defined()) {
      const auto bd = bias.data();
      for (std::size_t o = 0; o < Cout; ++o) std::fill_n(ob + o * L, L, bd[o]);
    }
    gemm::nn(Cout, L, K, wd, cols.data(), ob);
  }
  const bool track = tracking({&x, &weight, &bias});
  Tensor y({B, Cout, g.out_h, g.out_w}, std::move(out), track);
  if (track) {
    NodePtr bn = bias.defined() ? bias.node() : nullptr;
    record([xn = x.node(), wn = weight.node(), bn, yn = y.node(), g, B, Cout, K, L] {
      const auto& gy = yn->grad_buffer();
      std::vector<double> cols(K * L), dcols(K * L);
      const std::size_t in_sz = g.channels * g.height * g.width;
      for (std::size_t b = 0; b < B; ++b) {
        const double* gyb = gy.data() + b * Cout * L;
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t o = 0; o < Cout; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < L; ++i) s += gyb[o * L + i];
            gb[o] += s;
          }
        }
        if (wn->requires_grad) {
          im2col(xn->data.data() + b * in_sz, g, cols.data());
          gemm::nt(Cout, L, K, gyb, cols.data(), wn->grad_buffer().data());
        }
        if (xn->requires_grad) {
          std::fill(dcols.begin(), dcols.end(), 0.0);
          gemm::tn(Cout, L, K, wn->data.data(), gyb, dcols.data());
          col2im(dcols.data(), g, xn->grad_buffer().data() + b * in_sz);
        }
      }
    });
  }
  return y;
}

Tensor unfold(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const auto g = conv_geometry(x, kernel, stride, padding, "unfold");
  const std::size_t B = x.size(0), C = g.channels, L = g.out_h * g.out_w, D = kernel * kernel * C;
  // src[t*D + e] is the flat input offset (within one image) or npos for padding.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> src(L * D, npos);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const std::size_t t = oy * g.out_w + ox;
      for (std::size_t ki = 0; ki < kernel; ++ki) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(padding);
        for (std::size_t kj = 0; kj < kernel; ++kj) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
              ix >= static_cast<std::ptrdiff_t>(g.width)) {
            continue;
          }
          for (std::size_t c = 0; c < C; ++c) {
            src[t * D + (ki * kernel + kj) * C + c] =
                (c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix);
          }
        }
      }
    }
  }
  const std::size_t in_sz = C * g.height * g.width;
  std::vector<double> out(B * L * D, 0.0);
  const auto xd = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L * D; ++i) {
      if (src[i] != npos) out[b * L * D + i] = xd[b * in_sz + src[i]];
    }
  }
  const bool track = tracking({&x});
  Tensor y({B, L, D}, std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), src = std::move(src), B, in_sz] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      const std::size_t n = src.size();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
          if (src[i] != npos) g[b * in_sz + src[i]] += gy[b * n + i];
        }
      }
    });
  }
  return y;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t height, std::size_t width) {
  if (x.dim() != 4) throw DimensionError("upsample_bilinear expects (B,C,H,W), got " + shape_str(x.shape()));
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  if (height < H || width < W) {
    throw UsageError("upsample_bilinear: downscaling " + shape_str(x.shape()) + " to " +
                     std::to_string(height) + "x" + std::to_string(width) + " is unsupported");
  }
  const auto ty = bilinear_taps(H, height);
  const auto tx = bilinear_taps(W, width);
  std::vector<double> out(B * C * height * width);
  const auto xd = x.data();
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* img = xd.data() + p * H * W;
    double* o = out.data() + p * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const auto& a = ty[y];
      for (std::size_t xx = 0; xx < width; ++xx) {
        const auto& b = tx[xx];
        const double top = img[a.i0 * W + b.i0] * (1.0 - b.w1) + img[a.i0 * W + b.i1] * b.w1;
        const double bot = img[a.i1 * W + b.i0] * (1.0 - b.w1) + img[a.i1 * W + b.i1] * b.w1;
        o[y * width + xx] = top * (1.0 - a.w1) + bot * a.w1;
      }
    }
  }
  const bool track = tracking({&x});
  Tensor y({B, C, height, width}, std::move(out), track);
  if (track) {
    record([xn = x.node(), yn = y.node(), ty, tx, B, C, H, W, height, width] {
      const auto& gy = yn->grad_buffer();
      auto& g = xn->grad_buffer();
      for (std::size_t p = 0; p < B * C; ++p) {
        double* gi = g.data() + p * H * W;
        const double* go = gy.data() + p * height * width;
        for (std::size_t y = 0; y < height; ++y) {
          const auto& a = ty[y];
          for (std::size_t xx = 0; xx < width; ++xx) {
            const auto& b = tx[xx];
            const double v = go[y * width + xx];
            gi[a.i0 * W + b.i0] += v * (1.0 - a.w1) * (1.0 - b.w1);
            gi[a.i0 * W + b.i1] += v * (1.0 - a.w1) * b.w1;
            gi[a.i1 * W + b.i0] += v * a.w1 * (1.0 - b.w1);
            gi[a.i1 * W + b.i1] += v * a.w1 * b.w1;
          }
        }
      }
    });
  }
  return y;
}

Tensor binary_cross_entropy(const Tensor& prediction, const Tensor& target, double eps) {
  require_same_shape(prediction, target, "binary_cross_entropy");
  const auto sd = prediction.data(), gd = target.data();
  const std::size_t n = sd.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::clamp(sd[i], eps, 1.0 - eps);
    total += gd[i] * std::log(s) + (1.0 - gd[i]) * std::log(1.0 - s);
  }
  const double loss = -total / static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("binary_cross_entropy: non-finite loss");
  const bool track = tracking({&prediction});
  Tensor y({1}, {loss}, track);
  if (track) {
    record([sn = prediction.node(), tn = target.node(), yn = y.node(), eps, n] {
      const double gy = yn->grad_buffer()[0] / static_cast<double>(n);
      auto& g = sn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = sn->data[i];
        if (s < eps || s > 1.0 - eps) continue;  // clamped: flat
        const double t = tn->data[i];
        g[i] -= gy * (t / s - (1.0 - t) / (1.0 - s));
      }
    });
  }
  return y;
}

}  // namespace siatrans
