#include "hipass/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hipass/signal.hpp"

namespace hipass::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

thread_local bool grad_enabled = true;

Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (!grad_enabled) return Var(std::move(node));
    for (const auto& in : inputs) {
        if (!in) continue;
        node->requires_grad = node->requires_grad || in.requires_grad();
        node->inputs.push_back(in.ptr());
    }
    if (node->requires_grad) node->backward = std::move(bw);
    return Var(std::move(node));
}

// Elementwise op with derivative computed from the input value.
template <typename F, typename D>
Var unary(const Var& x, F f, D df) {
    Tensor out = x.value();
    for (auto& v : out.storage()) v = f(v);
    auto xn = x.ptr();
    return record(std::move(out), {x}, [xn, df](Node& self) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->grad_buffer();
        const auto& in = xn->value.storage();
        const auto& up = self.grad.storage();
        for (std::size_t i = 0; i < in.size(); ++i) g[i] += up[i] * df(in[i]);
    });
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

void Node::accumulate(const Tensor& g) { grad_buffer() += g; }

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::parameter(Tensor value, std::string name) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->name = std::move(name);
    return Var(std::move(node));
}

Tensor Var::grad() const {
    if (node_->grad.empty()) return Tensor(node_->value.shape());
    return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

void backward(const Var& root) {
    if (root.value().size() != 1) throw DimensionError("backward needs a scalar root", "root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

Var ParameterSet::add(std::string name, Tensor init) {
    if (contains(name)) throw UsageError("duplicate parameter '" + name + "'", name);
    params_.push_back(Var::parameter(std::move(init), std::move(name)));
    return params_.back();
}

Var ParameterSet::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name() == name) return p;
    throw UsageError("unknown parameter '" + name + "'", name);
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Var& p) { return p.name() == name; });
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
}

Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t pad) {
    require_rank(x.value(), 3, "input");
    require_rank(w.value(), 4, "weight");
    const std::size_t cin = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
    const std::size_t cout = w.value().dim(0), k = w.value().dim(2);
    if (w.value().dim(1) != cin)
        throw DimensionError("conv weight expects " + std::to_string(w.value().dim(1)) + " input channels, got " +
                                 std::to_string(cin),
                             "input");
    if (w.value().dim(3) != k) throw DimensionError("conv kernels must be square", "weight");
    if (bias && bias.value().size() != cout) throw DimensionError("bias size mismatch", "bias");
    if (h + 2 * pad < k || wd + 2 * pad < k) throw DimensionError("input smaller than kernel", "input");
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    const std::size_t rows = cin * k * k, hw = oh * ow;

    // im2col; skipped for pointwise convolutions.
    const bool pointwise = k == 1 && stride == 1 && pad == 0;
    auto cols = std::make_shared<std::vector<double>>();
    if (!pointwise) {
        cols->assign(rows * hw, 0.0);
        const double* src = x.value().data().data();
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    double* dst = cols->data() + ((c * k + i) * k + j) * hw;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const auto ix =
                                static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            dst[oy * ow + ox] = src[(c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
                        }
                    }
                }
    }
    const double* col_ptr = pointwise ? x.value().data().data() : cols->data();

    Tensor out({cout, oh, ow});
    MapR y(out.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
    CMapR wm(w.value().data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
    CMapR cm(col_ptr, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
    y.noalias() = wm * cm;
    if (bias)
        for (std::size_t o = 0; o < cout; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias.value()[o];

    auto xn = x.ptr(), wn = w.ptr();
    auto bn = bias ? bias.ptr() : nullptr;
    return record(std::move(out), {x, w, bias}, [=](Node& self) {
        CMapR gy(self.grad.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
        const double* cp = pointwise ? xn->value.data().data() : cols->data();
        CMapR cmat(cp, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
        if (wn->requires_grad) {
            MapR gw(wn->grad_buffer().data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
            gw.noalias() += gy * cmat.transpose();
        }
        if (bn && bn->requires_grad) {
            Tensor& gb = bn->grad_buffer();
            // plain loop: Eigen's vectorised sum peels by address, which breaks bitwise reruns
            const double* g = self.grad.data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                double s = 0.0;
                for (std::size_t i = 0; i < hw; ++i) s += g[o * hw + i];
                gb[o] += s;
            }
        }
        if (xn->requires_grad) {
            CMapR wmat(wn->value.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
            Tensor& gx = xn->grad_buffer();
            if (pointwise) {
                MapR gxm(gx.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                gxm.noalias() += wmat.transpose() * gy;
                return;
            }
            MatR gcols = wmat.transpose() * gy;
            double* dst = gx.data().data();
            for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double* src = gcols.data() + ((c * k + i) * k + j) * hw;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const auto iy =
                                static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const auto ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                dst[(c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] +=
                                    src[oy * ow + ox];
                            }
                        }
                    }
        }
    });
}

Var leaky_relu(const Var& x, double slope) {
    return unary(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; }, [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Var relu(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var abs(const Var& x) {
    return unary(
        x, [](double v) { return std::abs(v); }, [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "b");
    auto an = a.ptr(), bn = b.ptr();
    return record(a.value() + b.value(), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "b");
    auto an = a.ptr(), bn = b.ptr();
    return record(a.value() - b.value(), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->grad_buffer() -= self.grad;
    });
}

Var scale(const Var& x, double s) {
    auto xn = x.ptr();
    return record(x.value() * s, {x}, [xn, s](Node& self) {
        if (xn->requires_grad) xn->accumulate(self.grad * s);
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat of nothing", "parts");
    Shape shape = parts.front().shape();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
            throw DimensionError("concat parts differ beyond axis 0: " + shape_string(s) + " vs " + shape_string(shape),
                                 "parts");
        rows += s[0];
    }
    shape[0] = rows;
    Tensor out(shape);
    std::size_t offset = 0;
    std::vector<std::shared_ptr<Node>> nodes;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.value().size();
        nodes.push_back(p.ptr());
    }
    return record(std::move(out), parts, [nodes](Node& self) {
        std::size_t off = 0;
        for (const auto& n : nodes) {
            const std::size_t len = n->value.size();
            if (n->requires_grad) {
                Tensor& g = n->grad_buffer();
                for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

Var global_avg_pool(const Var& x) {
    require_rank(x.value(), 3, "input");
    const std::size_t c = x.value().dim(0), area = x.value().dim(1) * x.value().dim(2);
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < area; ++i) s += x.value()[ch * area + i];
        out[ch] = s / static_cast<double>(area);
    }
    auto xn = x.ptr();
    return record(std::move(out), {x}, [xn, c, area](Node& self) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = self.grad[ch] / static_cast<double>(area);
            for (std::size_t i = 0; i < area; ++i) g[ch * area + i] += v;
        }
    });
}

Var dense(const Var& x, const Var& w, const Var& bias) {
    require_rank(w.value(), 2, "weight");
    const std::size_t out_n = w.value().dim(0), in_n = w.value().dim(1);
    if (x.value().size() != in_n)
        throw DimensionError("dense expects " + std::to_string(in_n) + " inputs, got " + std::to_string(x.value().size()),
                             "input");
    if (bias && bias.value().size() != out_n) throw DimensionError("bias size mismatch", "bias");
    Tensor out({out_n});
    for (std::size_t o = 0; o < out_n; ++o) {
        double s = bias ? bias.value()[o] : 0.0;
        for (std::size_t i = 0; i < in_n; ++i) s += w.value().at(o, i) * x.value()[i];
        out[o] = s;
    }
    auto xn = x.ptr(), wn = w.ptr();
    auto bn = bias ? bias.ptr() : nullptr;
    return record(std::move(out), {x, w, bias}, [=](Node& self) {
        if (wn->requires_grad) {
            Tensor& gw = wn->grad_buffer();
            for (std::size_t o = 0; o < out_n; ++o)
                for (std::size_t i = 0; i < in_n; ++i) gw.at(o, i) += self.grad[o] * xn->value[i];
        }
        if (bn && bn->requires_grad) bn->accumulate(self.grad);
        if (xn->requires_grad) {
            Tensor& gx = xn->grad_buffer();
            for (std::size_t o = 0; o < out_n; ++o)
                for (std::size_t i = 0; i < in_n; ++i) gx[i] += self.grad[o] * wn->value.at(o, i);
        }
    });
}

Var pixel_shuffle(const Var& x, std::size_t s) {
    auto xn = x.ptr();
    return record(hipass::pixel_shuffle(x.value(), s), {x}, [xn, s](Node& self) {
        if (xn->requires_grad) xn->accumulate(hipass::pixel_unshuffle(self.grad, s));
    });
}

Var pixel_unshuffle(const Var& x, std::size_t s) {
    auto xn = x.ptr();
    return record(hipass::pixel_unshuffle(x.value(), s), {x}, [xn, s](Node& self) {
        if (xn->requires_grad) xn->accumulate(hipass::pixel_shuffle(self.grad, s));
    });
}

Var reshape(const Var& x, Shape shape) {
    auto xn = x.ptr();
    return record(x.value().reshaped(std::move(shape)), {x}, [xn](Node& self) {
        if (xn->requires_grad) xn->accumulate(self.grad.reshaped(xn->value.shape()));
    });
}

Var bilinear_warp_stopgrad(const Var& x, const Tensor& flow) {
    Tensor out = hipass::bilinear_warp(x.value(), flow);
    auto xn = x.ptr();
    return record(std::move(out), {x}, [xn, flow](Node& self) {
        if (!xn->requires_grad) return;
        const std::size_t c = xn->value.dim(0), h = xn->value.dim(1), w = xn->value.dim(2);
        Tensor& g = xn->grad_buffer();
        const double max_x = static_cast<double>(w - 1), max_y = static_cast<double>(h - 1);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double sx = std::clamp(static_cast<double>(x) + flow.at(0, y, x), 0.0, max_x);
                const double sy = std::clamp(static_cast<double>(y) + flow.at(1, y, x), 0.0, max_y);
                const auto x0 = static_cast<std::size_t>(std::floor(sx));
                const auto y0 = static_cast<std::size_t>(std::floor(sy));
                const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double up = self.grad.at(ch, y, x);
                    g.at(ch, y0, x0) += up * (1.0 - fx) * (1.0 - fy);
                    g.at(ch, y0, x1) += up * fx * (1.0 - fy);
                    g.at(ch, y1, x0) += up * (1.0 - fx) * fy;
                    g.at(ch, y1, x1) += up * fx * fy;
                }
            }
    });
}

Var combine(const Var& alpha, const Tensor& basis) {
    const std::size_t m = basis.dim(0);
    if (alpha.value().size() != m)
        throw DimensionError("expected " + std::to_string(m) + " coefficients, got " +
                                 std::to_string(alpha.value().size()),
                             "alpha");
    const Shape kshape(basis.shape().begin() + 1, basis.shape().end());
    const std::size_t n = shape_size(kshape);
    Tensor out(kshape);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) out[i] += alpha.value()[j] * basis[j * n + i];
    auto an = alpha.ptr();
    return record(std::move(out), {alpha}, [an, basis, m, n](Node& self) {
        if (!an->requires_grad) return;
        Tensor& g = an->grad_buffer();
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += self.grad[i] * basis[j * n + i];
            g[j] += s;
        }
    });
}

Var conv3d_temporal(const Var& window, const Var& kernel) {
    const Tensor& in = window.value();
    const Tensor& k = kernel.value();
    require_rank(in, 4, "window");
    require_rank(k, 3, "kernel");
    const std::size_t c = in.dim(0), t = in.dim(1), h = in.dim(2), w = in.dim(3);
    const std::size_t kh = k.dim(1), kw = k.dim(2);
    if (k.dim(0) != t) throw DimensionError("window/kernel temporal extent mismatch", "kernel");
    if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("kernel extents must be odd", "kernel");
    const auto ry = static_cast<std::ptrdiff_t>(kh / 2), rx = static_cast<std::ptrdiff_t>(kw / 2);
    const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);

    // out(c,y,x) = sum_{tau,i,j} k(tau,i,j) in(c,tau,clamp(y+ry-i),clamp(x+rx-j))
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t tau = 0; tau < t; ++tau)
            for (std::size_t i = 0; i < kh; ++i)
                for (std::size_t j = 0; j < kw; ++j) {
                    const std::size_t kidx = (tau * kh + i) * kw + j;
                    for (std::size_t y = 0; y < h; ++y) {
                        const auto sy = static_cast<std::size_t>(
                            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + ry - static_cast<std::ptrdiff_t>(i), 0, ih - 1));
                        for (std::size_t x = 0; x < w; ++x) {
                            const auto sx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                                static_cast<std::ptrdiff_t>(x) + rx - static_cast<std::ptrdiff_t>(j), 0, iw - 1));
                            fn(kidx, tau, y, x, sy, sx);
                        }
                    }
                }
    };

    Tensor out({c, h, w});
    for_each_tap([&](std::size_t kidx, std::size_t tau, std::size_t y, std::size_t x, std::size_t sy, std::size_t sx) {
        const double kv = k[kidx];
        if (kv == 0.0) return;
        for (std::size_t ch = 0; ch < c; ++ch) out.at(ch, y, x) += kv * in.at(ch, tau, sy, sx);
    });

    auto wn = window.ptr(), kn = kernel.ptr();
    return record(std::move(out), {window, kernel}, [=](Node& self) {
        const Tensor& up = self.grad;
        Tensor* gk = kn->requires_grad ? &kn->grad_buffer() : nullptr;
        Tensor* gw = wn->requires_grad ? &wn->grad_buffer() : nullptr;
        for_each_tap([&](std::size_t kidx, std::size_t tau, std::size_t y, std::size_t x, std::size_t sy, std::size_t sx) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double u = up.at(ch, y, x);
                if (gk) (*gk)[kidx] += u * wn->value.at(ch, tau, sy, sx);
                if (gw) gw->at(ch, tau, sy, sx) += u * kn->value[kidx];
            }
        });
    });
}

Var charbonnier_loss(const Var& pred, const Tensor& target, double eps) {
    require_same_shape(pred.value(), target, "target");
    if (!(eps > 0.0)) throw PreconditionError("Charbonnier eps must be positive", "eps");
    const std::size_t n = target.size();
    const double eps2 = eps * eps;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.value()[i] - target[i];
        s += std::sqrt(d * d + eps2);
    }
    auto pn = pred.ptr();
    return record(Tensor::scalar(s / static_cast<double>(n)), {pred}, [pn, target, eps2, n](Node& self) {
        if (!pn->requires_grad) return;
        Tensor& g = pn->grad_buffer();
        const double up = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = pn->value[i] - target[i];
            g[i] += up * d / std::sqrt(d * d + eps2);
        }
    });
}

Var sum(const Var& x) {
    auto xn = x.ptr();
    return record(Tensor::scalar(x.value().sum()), {x}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->grad_buffer();
        for (auto& v : g.storage()) v += self.grad[0];
    });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace hipass::nn
