#include "coevolve/tape.hpp"

#include <algorithm>
#include <cmath>

namespace coevolve::ad {

namespace {

void check_same_shape(const Matrix &a, const Matrix &b, const char *op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

} // namespace

Var Tape::push(Matrix value, bool requires_grad,
               std::function<void(Tape &, const Matrix &)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix &g) {
    Node &n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

const Matrix &Tape::grad(Var v) const {
    const Node &n = nodes_[v.id];
    if (n.grad.size() == 0) {
        static const Matrix empty;
        if (n.value.size() == 0) return empty;
        // Unreached leaves have zero gradient; materialize lazily.
        const_cast<Node &>(n).grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

Var Tape::constant(Matrix v) { return push(std::move(v), false, nullptr); }

Var Tape::leaf(Matrix v) { return push(std::move(v), true, nullptr); }

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    bool rg = requiresGrad(a) || requiresGrad(b);
    return push(value(a) + value(b), rg, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    bool rg = requiresGrad(a) || requiresGrad(b);
    return push(value(a) - value(b), rg, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, requiresGrad(a),
                [a, s](Tape &t, const Matrix &g) { t.accumulate(a, s * g); });
}

Var Tape::matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw std::invalid_argument("matmul: inner dims differ");
    bool rg = requiresGrad(a) || requiresGrad(b);
    return push(value(a) * value(b), rg, [a, b](Tape &t, const Matrix &g) {
        if (t.requiresGrad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.requiresGrad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var Tape::transpose(Var a) {
    return push(value(a).transpose(), requiresGrad(a),
                [a](Tape &t, const Matrix &g) { t.accumulate(a, g.transpose()); });
}

Var Tape::hadamard(Var a, Var b) {
    check_same_shape(value(a), value(b), "hadamard");
    bool rg = requiresGrad(a) || requiresGrad(b);
    return push(value(a).cwiseProduct(value(b)), rg, [a, b](Tape &t, const Matrix &g) {
        if (t.requiresGrad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
        if (t.requiresGrad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
}

Var Tape::addRowBroadcast(Var m, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(m).cols())
        throw std::invalid_argument("addRowBroadcast: row must be 1 x cols(m)");
    Matrix out = value(m);
    out.rowwise() += value(row).row(0);
    bool rg = requiresGrad(m) || requiresGrad(row);
    return push(std::move(out), rg, [m, row](Tape &t, const Matrix &g) {
        t.accumulate(m, g);
        if (t.requiresGrad(row)) t.accumulate(row, g.colwise().sum());
    });
}

Var Tape::mulColBroadcast(Var m, Var c) {
    if (value(c).cols() != 1 || value(c).rows() != value(m).rows())
        throw std::invalid_argument("mulColBroadcast: c must be rows(m) x 1");
    Matrix out = value(m).array().colwise() * value(c).col(0).array();
    bool rg = requiresGrad(m) || requiresGrad(c);
    return push(std::move(out), rg, [m, c](Tape &t, const Matrix &g) {
        if (t.requiresGrad(m))
            t.accumulate(m, g.array().colwise() * t.value(c).col(0).array());
        if (t.requiresGrad(c))
            t.accumulate(c, g.cwiseProduct(t.value(m)).rowwise().sum());
    });
}

Var Tape::relu(Var a) {
    Matrix out = value(a).cwiseMax(0.0);
    return push(std::move(out), requiresGrad(a), [a](Tape &t, const Matrix &g) {
        Matrix masked = (t.value(a).array() > 0.0).cast<double>() * g.array();
        t.accumulate(a, masked);
    });
}

Var Tape::sigmoid(Var a) {
    Matrix out = (1.0 + (-value(a).array()).exp()).inverse();
    Var v = push(std::move(out), requiresGrad(a), nullptr);
    nodes_[v.id].backprop = [a, v](Tape &t, const Matrix &g) {
        const Matrix &s = t.value(v);
        t.accumulate(a, g.cwiseProduct(s.cwiseProduct(Matrix::Ones(s.rows(), s.cols()) - s)));
    };
    return v;
}

Var Tape::softmaxRows(Var a) {
    Matrix out = value(a);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        RowVector r = out.row(i);
        double mx = r.maxCoeff();
        r = (r.array() - mx).exp();
        out.row(i) = r / r.sum();
    }
    Var v = push(std::move(out), requiresGrad(a), nullptr);
    nodes_[v.id].backprop = [a, v](Tape &t, const Matrix &g) {
        const Matrix &p = t.value(v);
        Matrix da(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            double dot = g.row(i).dot(p.row(i));
            da.row(i) = p.row(i).cwiseProduct(g.row(i) - RowVector::Constant(p.cols(), dot));
        }
        t.accumulate(a, da);
    };
    return v;
}

Var Tape::concatCols(Var a, Var b) {
    if (value(a).rows() != value(b).rows())
        throw std::invalid_argument("concatCols: row counts differ");
    Matrix out(value(a).rows(), value(a).cols() + value(b).cols());
    out << value(a), value(b);
    bool rg = requiresGrad(a) || requiresGrad(b);
    Eigen::Index ca = value(a).cols();
    return push(std::move(out), rg, [a, b, ca](Tape &t, const Matrix &g) {
        t.accumulate(a, g.leftCols(ca));
        t.accumulate(b, g.rightCols(g.cols() - ca));
    });
}

Var Tape::rowL2Normalize(Var a) {
    const Matrix &in = value(a);
    Matrix out(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
        double n = in.row(i).norm();
        if (n <= 0.0 || !std::isfinite(n))
            throw NumericalError("rowL2Normalize: zero or non-finite row norm");
        out.row(i) = in.row(i) / n;
    }
    Var v = push(std::move(out), requiresGrad(a), nullptr);
    nodes_[v.id].backprop = [a, v](Tape &t, const Matrix &g) {
        const Matrix &in = t.value(a);
        const Matrix &z = t.value(v);
        Matrix da(in.rows(), in.cols());
        for (Eigen::Index i = 0; i < in.rows(); ++i) {
            double n = in.row(i).norm();
            double dot = g.row(i).dot(z.row(i));
            da.row(i) = (g.row(i) - dot * z.row(i)) / n;
        }
        t.accumulate(a, da);
    };
    return v;
}

Var Tape::rescaleMinMaxOffdiag(Var s) {
    const Matrix &in = value(s);
    if (in.rows() != in.cols()) throw std::invalid_argument("rescaleMinMaxOffdiag: not square");
    const Eigen::Index n = in.rows();
    double lo = 0.0, hi = 0.0;
    Eigen::Index li = -1, lj = -1, hi_i = -1, hi_j = -1;
    bool first = true;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            double v = in(i, j);
            if (first || v < lo) { lo = v; li = i; lj = j; }
            if (first || v > hi) { hi = v; hi_i = i; hi_j = j; }
            first = false;
        }
    double denom = hi - lo;
    bool degenerate = first || denom <= 1e-300 ||
                      denom < 1e-14 * std::max(1.0, std::max(std::abs(hi), std::abs(lo)));
    Matrix out = Matrix::Zero(n, n);
    if (!degenerate) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j) out(i, j) = (in(i, j) - lo) / denom;
    }
    Var v = push(std::move(out), requiresGrad(s), nullptr);
    if (degenerate) {
        nodes_[v.id].backprop = [](Tape &, const Matrix &) {};
        return v;
    }
    nodes_[v.id].backprop = [s, v, denom, li, lj, hi_i, hi_j](Tape &t, const Matrix &g) {
        const Matrix &out = t.value(v);
        const Eigen::Index n = out.rows();
        Matrix ds = Matrix::Zero(n, n);
        double g_lo = 0.0, g_hi = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                ds(i, j) += g(i, j) / denom;
                g_lo += g(i, j) * (out(i, j) - 1.0) / denom;
                g_hi -= g(i, j) * out(i, j) / denom;
            }
        ds(li, lj) += g_lo;
        ds(hi_i, hi_j) += g_hi;
        t.accumulate(s, ds);
    };
    return v;
}

Var Tape::symMax(Var a) {
    const Matrix &in = value(a);
    if (in.rows() != in.cols()) throw std::invalid_argument("symMax: not square");
    Matrix out = in.cwiseMax(in.transpose());
    return push(std::move(out), requiresGrad(a), [a](Tape &t, const Matrix &g) {
        const Matrix &in = t.value(a);
        Matrix da = Matrix::Zero(in.rows(), in.cols());
        for (Eigen::Index i = 0; i < in.rows(); ++i)
            for (Eigen::Index j = 0; j < in.cols(); ++j) {
                if (in(i, j) >= in(j, i))
                    da(i, j) += g(i, j);
                else
                    da(j, i) += g(i, j);
            }
        t.accumulate(a, da);
    });
}

Var Tape::normalizeAdjDense(Var a) {
    const Matrix &in = value(a);
    if (in.rows() != in.cols()) throw std::invalid_argument("normalizeAdjDense: not square");
    const Eigen::Index n = in.rows();
    Matrix m = in + Matrix::Identity(n, n);
    Vector d = m.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i)
        if (d[i] <= 0.0) throw NumericalError("normalizeAdjDense: non-positive degree");
    Vector dis = d.array().rsqrt();
    Matrix out = dis.asDiagonal() * m * dis.asDiagonal();
    Var v = push(std::move(out), requiresGrad(a), nullptr);
    nodes_[v.id].backprop = [a, v, d](Tape &t, const Matrix &g) {
        const Matrix &out = t.value(v);
        const Eigen::Index n = out.rows();
        Vector r = g.cwiseProduct(out).rowwise().sum();   // r_k = sum_j g_kj out_kj
        Vector c = g.cwiseProduct(out).colwise().sum();   // c_l = sum_i g_il out_il
        Matrix da(n, n);
        for (Eigen::Index k = 0; k < n; ++k)
            for (Eigen::Index l = 0; l < n; ++l)
                da(k, l) = g(k, l) / std::sqrt(d[k] * d[l]) - 0.5 * (r[k] / d[k] + c[l] / d[l]);
        t.accumulate(a, da);
    };
    return v;
}

Var Tape::entropyRows(Var p) {
    const Matrix &in = value(p);
    const double log_c = std::log(static_cast<double>(in.cols()));
    if (in.cols() < 2) throw std::invalid_argument("entropyRows: need at least 2 classes");
    Matrix out(in.rows(), 1);
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
        double h = 0.0;
        for (Eigen::Index c = 0; c < in.cols(); ++c) {
            double pv = in(i, c);
            if (pv > kProbFloor) h -= pv * std::log(pv);
        }
        out(i, 0) = h / log_c;
    }
    return push(std::move(out), requiresGrad(p), [p, log_c](Tape &t, const Matrix &g) {
        const Matrix &in = t.value(p);
        Matrix dp = Matrix::Zero(in.rows(), in.cols());
        for (Eigen::Index i = 0; i < in.rows(); ++i)
            for (Eigen::Index c = 0; c < in.cols(); ++c) {
                double pv = in(i, c);
                if (pv > kProbFloor) dp(i, c) = -g(i, 0) * (std::log(pv) + 1.0) / log_c;
            }
        t.accumulate(p, dp);
    });
}

Var Tape::klRows(Var p, Var q) {
    check_same_shape(value(p), value(q), "klRows");
    const Matrix &pv = value(p);
    const Matrix &qv = value(q);
    Matrix out(pv.rows(), 1);
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < pv.cols(); ++c) {
            double pc = std::max(pv(i, c), kProbFloor);
            double qc = std::max(qv(i, c), kProbFloor);
            if (pv(i, c) > kProbFloor) s += pv(i, c) * (std::log(pc) - std::log(qc));
        }
        out(i, 0) = s;
    }
    bool rg = requiresGrad(p) || requiresGrad(q);
    return push(std::move(out), rg, [p, q](Tape &t, const Matrix &g) {
        const Matrix &pv = t.value(p);
        const Matrix &qv = t.value(q);
        if (t.requiresGrad(p)) {
            Matrix dp = Matrix::Zero(pv.rows(), pv.cols());
            for (Eigen::Index i = 0; i < pv.rows(); ++i)
                for (Eigen::Index c = 0; c < pv.cols(); ++c) {
                    double pc = std::max(pv(i, c), kProbFloor);
                    double qc = std::max(qv(i, c), kProbFloor);
                    double inner = std::log(pc) - std::log(qc);
                    if (pv(i, c) > kProbFloor) inner += 1.0;
                    dp(i, c) = g(i, 0) * inner;
                }
            t.accumulate(p, dp);
        }
        if (t.requiresGrad(q)) {
            Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
            for (Eigen::Index i = 0; i < qv.rows(); ++i)
                for (Eigen::Index c = 0; c < qv.cols(); ++c) {
                    if (qv(i, c) > kProbFloor)
                        dq(i, c) = -g(i, 0) * pv(i, c) / std::max(qv(i, c), kProbFloor);
                }
            t.accumulate(q, dq);
        }
    });
}

Var Tape::meanAll(Var a) {
    double scale = 1.0 / static_cast<double>(value(a).size());
    Matrix out(1, 1);
    out(0, 0) = value(a).sum() * scale;
    return push(std::move(out), requiresGrad(a), [a, scale](Tape &t, const Matrix &g) {
        const Matrix &in = t.value(a);
        t.accumulate(a, Matrix::Constant(in.rows(), in.cols(), g(0, 0) * scale));
    });
}

Var Tape::sumAll(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), requiresGrad(a), [a](Tape &t, const Matrix &g) {
        const Matrix &in = t.value(a);
        t.accumulate(a, Matrix::Constant(in.rows(), in.cols(), g(0, 0)));
    });
}

Var Tape::crossEntropyMasked(Var probs, const std::vector<int> &labels,
                             const std::vector<std::uint8_t> &mask) {
    const Matrix &p = value(probs);
    if (static_cast<Eigen::Index>(labels.size()) != p.rows() ||
        static_cast<Eigen::Index>(mask.size()) != p.rows())
        throw std::invalid_argument("crossEntropyMasked: labels/mask length mismatch");
    long count = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
    if (count == 0) throw std::invalid_argument("crossEntropyMasked: empty mask");
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (!mask[i]) continue;
        int y = labels[i];
        if (y < 0 || y >= p.cols()) throw std::invalid_argument("crossEntropyMasked: label range");
        loss -= std::log(std::max(p(i, y), kProbFloor));
    }
    Matrix out(1, 1);
    out(0, 0) = loss / static_cast<double>(count);
    return push(std::move(out), requiresGrad(probs),
                [probs, labels, mask, count](Tape &t, const Matrix &g) {
                    const Matrix &p = t.value(probs);
                    Matrix dp = Matrix::Zero(p.rows(), p.cols());
                    for (Eigen::Index i = 0; i < p.rows(); ++i) {
                        if (!mask[i]) continue;
                        int y = labels[i];
                        if (p(i, y) > kProbFloor)
                            dp(i, y) = -g(0, 0) / (static_cast<double>(count) * p(i, y));
                    }
                    t.accumulate(probs, dp);
                });
}

Var Tape::conflictHinge(Var z, const std::vector<std::vector<int>> &pos,
                        const std::vector<std::vector<int>> &neg, double dpos, double dneg,
                        double lambda) {
    const Matrix &zv = value(z);
    const Eigen::Index n = zv.rows();
    if (static_cast<Eigen::Index>(pos.size()) != n || static_cast<Eigen::Index>(neg.size()) != n)
        throw std::invalid_argument("conflictHinge: set sizes do not match rows");
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j : pos[i]) loss += std::max(0.0, dpos - zv.row(i).dot(zv.row(j)));
        for (int k : neg[i]) loss += lambda * std::max(0.0, zv.row(i).dot(zv.row(k)) - dneg);
    }
    Matrix out(1, 1);
    out(0, 0) = loss / static_cast<double>(n);
    return push(std::move(out), requiresGrad(z),
                [z, pos, neg, dpos, dneg, lambda, n](Tape &t, const Matrix &g) {
                    const Matrix &zv = t.value(z);
                    Matrix dz = Matrix::Zero(zv.rows(), zv.cols());
                    const double s = g(0, 0) / static_cast<double>(n);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        for (int j : pos[i]) {
                            if (dpos - zv.row(i).dot(zv.row(j)) > 0.0) {
                                dz.row(i) -= s * zv.row(j);
                                dz.row(j) -= s * zv.row(i);
                            }
                        }
                        for (int k : neg[i]) {
                            if (zv.row(i).dot(zv.row(k)) - dneg > 0.0) {
                                dz.row(i) += lambda * s * zv.row(k);
                                dz.row(k) += lambda * s * zv.row(i);
                            }
                        }
                    }
                    t.accumulate(z, dz);
                });
}

void Tape::backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
        throw std::invalid_argument("backward: loss must be a 1x1 scalar");
    for (Node &n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id].grad = Matrix::Constant(1, 1, 1.0);
    for (int i = loss.id; i >= 0; --i) {
        Node &n = nodes_[i];
        if (!n.requires_grad || !n.backprop || n.grad.size() == 0) continue;
        n.backprop(*this, n.grad);
    }
}

} // namespace coevolve::ad
