#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sima/attention.hpp"
#include "sima/cost.hpp"
#include "sima/tensor.hpp"

namespace sima {
namespace ad {

// One value in the recorded computation. `backprop` scatters this node's
// gradient into its parents; leaves have none.
struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Node*> parents;
    std::function<void(Node&)> backprop;

    explicit Node(Tensor v) : value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
};

// Records nodes in creation order; backward replays them in reverse. A tape
// may run backward once; a second call is rejected (idempotence contract:
// reject, tested).
class Tape {
public:
    CostReport cost;

    Node* leaf(Tensor v) { return make(std::move(v), {}, nullptr); }

    Node* matmul(Node* a, Node* b) {
        Tensor v = sima::matmul(a->value, b->value, &cost);
        return make(std::move(v), {a, b}, [](Node& n) {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            accumulate(a->grad, sima::matmul(n.grad, sima::transpose(b->value)));
            accumulate(b->grad, sima::matmul(sima::transpose(a->value), n.grad));
        });
    }

    Node* transpose(Node* a) {
        return make(sima::transpose(a->value), {a}, [](Node& n) {
            accumulate(n.parents[0]->grad, sima::transpose(n.grad));
        });
    }

    Node* add(Node* a, Node* b) {
        return make(sima::add(a->value, b->value), {a, b}, [](Node& n) {
            accumulate(n.parents[0]->grad, n.grad);
            accumulate(n.parents[1]->grad, n.grad);
        });
    }

    Node* sub(Node* a, Node* b) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v.data[i] -= b->value.data[i];
        return make(std::move(v), {a, b}, [](Node& n) {
            accumulate(n.parents[0]->grad, n.grad);
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                n.parents[1]->grad.data[i] -= n.grad.data[i];
        });
    }

    Node* mul(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) throw ShapeError("ad::mul: shape mismatch");
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v.data[i] *= b->value.data[i];
        return make(std::move(v), {a, b}, [](Node& n) {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                a->grad.data[i] += n.grad.data[i] * b->value.data[i];
                b->grad.data[i] += n.grad.data[i] * a->value.data[i];
            }
        });
    }

    Node* scale(Node* a, double c) {
        return make(sima::scale(a->value, c), {a}, [c](Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                n.parents[0]->grad.data[i] += c * n.grad.data[i];
        });
    }

    Node* reshape(Node* a, std::vector<std::size_t> shape) {
        if (Tensor::count(shape) != a->value.size()) throw ShapeError("ad::reshape: size mismatch");
        Tensor v(std::move(shape), a->value.data);
        return make(std::move(v), {a}, [](Node& n) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i];
        });
    }

    Node* slice_cols(Node* a, std::size_t c0, std::size_t c1) {
        return make(sima::slice_cols(a->value, c0, c1), {a}, [c0, c1](Node& n) {
            Node* a = n.parents[0];
            const std::size_t w = c1 - c0, cols = a->value.cols();
            for (std::size_t i = 0; i < n.grad.rows(); ++i)
                for (std::size_t j = 0; j < w; ++j)
                    a->grad.data[i * cols + c0 + j] += n.grad(i, j);
        });
    }

    Node* concat_cols(std::vector<Node*> parts) {
        std::vector<Tensor> vals;
        vals.reserve(parts.size());
        for (Node* p : parts) vals.push_back(p->value);
        return make(sima::concat_cols(vals), parts, [](Node& n) {
            std::size_t off = 0;
            for (Node* p : n.parents) {
                const std::size_t w = p->value.cols();
                for (std::size_t i = 0; i < p->value.rows(); ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        p->grad(i, j) += n.grad(i, off + j);
                off += w;
            }
        });
    }

    // Prepends a 1xD row (e.g. a CLS token) to an NxD matrix.
    Node* prepend_row(Node* row, Node* x) {
        if (row->value.rows() != 1 || row->value.cols() != x->value.cols())
            throw ShapeError("ad::prepend_row: row must be 1 x cols(x)");
        const std::size_t n = x->value.rows(), d = x->value.cols();
        Tensor v({n + 1, d});
        for (std::size_t j = 0; j < d; ++j) v(0, j) = row->value(0, j);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) v(i + 1, j) = x->value(i, j);
        return make(std::move(v), {row, x}, [](Node& n_) {
            Node* row = n_.parents[0];
            Node* x = n_.parents[1];
            const std::size_t d = x->value.cols();
            for (std::size_t j = 0; j < d; ++j) row->grad(0, j) += n_.grad(0, j);
            for (std::size_t i = 0; i < x->value.rows(); ++i)
                for (std::size_t j = 0; j < d; ++j) x->grad(i, j) += n_.grad(i + 1, j);
        });
    }

    Node* add_row_bias(Node* a, Node* bias) {
        return make(sima::add_row_bias(a->value, bias->value), {a, bias}, [](Node& n) {
            Node* a = n.parents[0];
            Node* bias = n.parents[1];
            const std::size_t cols = a->value.cols();
            accumulate(a->grad, n.grad);
            for (std::size_t i = 0; i < a->value.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) bias->grad.data[j] += n.grad(i, j);
        });
    }

    Node* softmax_rows(Node* a) {
        return make(sima::softmax_rows(a->value, &cost), {a}, [](Node& n) {
            Node* a = n.parents[0];
            const std::size_t m = n.value.rows(), c = n.value.cols();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += n.grad(i, j) * n.value(i, j);
                for (std::size_t j = 0; j < c; ++j)
                    a->grad(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
            }
        });
    }

    Node* gelu(Node* a) {
        return make(sima::gelu(a->value, &cost), {a}, [](Node& n) {
            Node* a = n.parents[0];
            constexpr double c = 0.7978845608028654;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double x = a->value.data[i];
                const double t = std::tanh(c * (x + 0.044715 * x * x * x));
                const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
                const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                a->grad.data[i] += n.grad.data[i] * d;
            }
        });
    }

    // Subgradient 0 at x == 0.
    Node* relu(Node* a) {
        return make(sima::relu(a->value), {a}, [](Node& n) {
            Node* a = n.parents[0];
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                if (a->value.data[i] > 0) a->grad.data[i] += n.grad.data[i];
        });
    }

    // phi(x) = 1 + elu(x), used by the ELU linear-attention baseline.
    Node* elu_phi(Node* a) {
        return make(sima::elu_feature_map(a->value, &cost), {a}, [](Node& n) {
            Node* a = n.parents[0];
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double x = a->value.data[i];
                const double d = x > 0 ? 1.0 : std::exp(x);
                a->grad.data[i] += n.grad.data[i] * d;
            }
        });
    }

    Node* layer_norm(Node* x, Node* gain, Node* bias, double eps = 1e-6) {
        return make(sima::layer_norm(x->value, gain->value, bias->value, eps), {x, gain, bias},
                    [eps](Node& n) {
            Node* x = n.parents[0];
            Node* gain = n.parents[1];
            Node* bias = n.parents[2];
            const std::size_t rows = x->value.rows(), d = x->value.cols();
            std::vector<double> xhat(d), t(d);
            for (std::size_t i = 0; i < rows; ++i) {
                double mean = 0;
                for (std::size_t j = 0; j < d; ++j) mean += x->value(i, j);
                mean /= double(d);
                double var = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double c = x->value(i, j) - mean;
                    var += c * c;
                }
                var /= double(d);
                const double inv = 1.0 / std::sqrt(var + eps);
                double t_mean = 0, tx_mean = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    xhat[j] = (x->value(i, j) - mean) * inv;
                    t[j] = n.grad(i, j) * gain->value.data[j];
                    t_mean += t[j];
                    tx_mean += t[j] * xhat[j];
                    gain->grad.data[j] += n.grad(i, j) * xhat[j];
                    bias->grad.data[j] += n.grad(i, j);
                }
                t_mean /= double(d);
                tx_mean /= double(d);
                for (std::size_t j = 0; j < d; ++j)
                    x->grad(i, j) += inv * (t[j] - t_mean - xhat[j] * tx_mean);
            }
        });
    }

    // sign(0) treated as 0; the sign pattern is held constant in backward.
    Node* l1_normalize_columns(Node* a, double eps) {
        return make(sima::l1_normalize_columns(a->value, eps), {a}, [eps](Node& n) {
            Node* a = n.parents[0];
            const std::size_t rows = a->value.rows(), c = a->value.cols();
            for (std::size_t j = 0; j < c; ++j) {
                double s = 0;
                for (std::size_t i = 0; i < rows; ++i) s += std::abs(a->value(i, j));
                if (s > eps) {
                    double gy = 0;
                    for (std::size_t i = 0; i < rows; ++i) gy += n.grad(i, j) * n.value(i, j);
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double x = a->value(i, j);
                        const double sgn = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
                        a->grad(i, j) += (n.grad(i, j) - sgn * gy) / s;
                    }
                } else {
                    for (std::size_t i = 0; i < rows; ++i) a->grad(i, j) += n.grad(i, j) / eps;
                }
            }
        });
    }

    Node* l2_normalize_columns(Node* a, double eps) {
        return make(sima::l2_normalize_columns(a->value, eps), {a}, [eps](Node& n) {
            Node* a = n.parents[0];
            const std::size_t rows = a->value.rows(), c = a->value.cols();
            for (std::size_t j = 0; j < c; ++j) {
                double ss = 0;
                for (std::size_t i = 0; i < rows; ++i) ss += a->value(i, j) * a->value(i, j);
                const double s = std::sqrt(ss);
                if (s > eps) {
                    double gx = 0;
                    for (std::size_t i = 0; i < rows; ++i) gx += n.grad(i, j) * a->value(i, j);
                    for (std::size_t i = 0; i < rows; ++i)
                        a->grad(i, j) += n.grad(i, j) / s - a->value(i, j) * gx / (s * s * s);
                } else {
                    for (std::size_t i = 0; i < rows; ++i) a->grad(i, j) += n.grad(i, j) / eps;
                }
            }
        });
    }

    // y[i][j] = numer[i][j] / denom[i][0]; denom is N x 1.
    Node* divide_rows(Node* numer, Node* denom) {
        const std::size_t rows = numer->value.rows(), c = numer->value.cols();
        if (denom->value.rows() != rows || denom->value.cols() != 1)
            throw ShapeError("ad::divide_rows: denom must be N x 1");
        Tensor v = numer->value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) v(i, j) /= denom->value(i, 0);
        return make(std::move(v), {numer, denom}, [](Node& n) {
            Node* numer = n.parents[0];
            Node* denom = n.parents[1];
            const std::size_t rows = numer->value.rows(), c = numer->value.cols();
            for (std::size_t i = 0; i < rows; ++i) {
                const double dv = denom->value(i, 0);
                double acc = 0;
                for (std::size_t j = 0; j < c; ++j) {
                    numer->grad(i, j) += n.grad(i, j) / dv;
                    acc += n.grad(i, j) * n.value(i, j);
                }
                denom->grad(i, 0) -= acc / dv;
            }
        });
    }

    Node* mean_rows(Node* a) {
        const std::size_t rows = a->value.rows(), c = a->value.cols();
        Tensor v({1, c});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) v(0, j) += a->value(i, j);
        for (std::size_t j = 0; j < c; ++j) v(0, j) /= double(rows);
        return make(std::move(v), {a}, [rows](Node& n) {
            Node* a = n.parents[0];
            const std::size_t c = a->value.cols();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    a->grad(i, j) += n.grad(0, j) / double(rows);
        });
    }

    Node* select_row(Node* a, std::size_t r) {
        const std::size_t c = a->value.cols();
        Tensor v({1, c});
        for (std::size_t j = 0; j < c; ++j) v(0, j) = a->value(r, j);
        return make(std::move(v), {a}, [r](Node& n) {
            for (std::size_t j = 0; j < n.grad.cols(); ++j)
                n.parents[0]->grad(r, j) += n.grad(0, j);
        });
    }

    Node* sum(Node* a) {
        double s = 0;
        for (double v : a->value.data) s += v;
        return make(Tensor({1}, {s}), {a}, [](Node& n) {
            for (double& g : n.parents[0]->grad.data) g += n.grad.data[0];
        });
    }

    // Numerically stable -log softmax(logits)[label]; logits is 1 x C.
    Node* cross_entropy_with_logits(Node* logits, std::size_t label) {
        const std::size_t c = logits->value.size();
        if (label >= c) throw ConfigError("cross_entropy: label out of range");
        const double* l = logits->value.data.data();
        double mx = l[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        double se = 0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(l[j] - mx);
        cost.exp_ops += c;
        const double loss = mx + std::log(se) - l[label];
        return make(Tensor({1}, {loss}), {logits}, [label, mx, se](Node& n) {
            Node* logits = n.parents[0];
            const double g = n.grad.data[0];
            for (std::size_t j = 0; j < logits->value.size(); ++j) {
                const double p = std::exp(logits->value.data[j] - mx) / se;
                logits->grad.data[j] += g * (p - (j == label ? 1.0 : 0.0));
            }
        });
    }

    // Runs reverse-mode accumulation from a scalar loss. All leaf gradients
    // are populated afterwards.
    void backward(Node* loss) {
        if (loss->value.size() != 1) throw ContractError("backward: loss must be scalar");
        if (backward_done_) throw ContractError("backward: tape already replayed; build a new tape");
        backward_done_ = true;
        loss->grad.data[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    static void accumulate(Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
    }

    Node* make(Tensor v, std::vector<Node*> parents, std::function<void(Node&)> fn) {
        auto node = std::make_unique<Node>(std::move(v));
        node->parents = std::move(parents);
        node->backprop = std::move(fn);
        nodes_.push_back(std::move(node));
        return nodes_.back().get();
    }

    std::vector<std::unique_ptr<Node>> nodes_;
    bool backward_done_ = false;
};

// Central-difference gradient checker. `f` builds a scalar loss from a leaf;
// `skip` lets callers exclude coordinates near relu/abs kinks, where finite
// differences are invalid.
inline double grad_check(const std::function<Node*(Tape&, Node*)>& f, const Tensor& x, double h,
                         const std::function<bool(std::size_t)>& skip = {}) {
    if (h <= 0) throw ConfigError("grad_check: h must be > 0");
    Tape tape;
    Node* xn = tape.leaf(x);
    Node* loss = f(tape, xn);
    tape.backward(loss);
    const Tensor analytic = xn->grad;

    auto eval = [&](const Tensor& pt, std::size_t coord) {
        Tape t;
        Node* n = t.leaf(pt);
        const double v = f(t, n)->value.data[0];
        if (!std::isfinite(v))
            throw NumericError("grad_check: non-finite f at coordinate " + std::to_string(coord));
        return v;
    };

    double max_err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (skip && skip(i)) continue;
        Tensor xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        const double numeric = (eval(xp, i) - eval(xm, i)) / (2 * h);
        const double a = analytic.data[i];
        const double diff = std::abs(a - numeric);
        // differences below the central-difference noise floor are not signal
        if (diff < 1e-7) continue;
        max_err = std::max(max_err, diff / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
    return max_err;
}

} // namespace ad
} // namespace sima
