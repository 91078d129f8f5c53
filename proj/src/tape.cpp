#include "attrformer/tape.hpp"

#include <cmath>
#include <sstream>

namespace attrformer {

namespace {

std::string shapeOf(const Mat& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void requireSameTape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    }
}

void requireSameShape(Var a, Var b, const char* op) {
    requireSameTape(a, b, op);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shapeOf(a.value()) +
                             " vs " + shapeOf(b.value()));
    }
}

} // namespace

const Mat& Var::value() const { return tape->value(id); }

Var Tape::input(Mat v) {
    Node n;
    n.value = std::move(v);
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
    Var v = input(p.value);
    nodes_.back().bound = &p;
    return v;
}

Var Tape::emplace(Mat value, std::function<void(Tape&, const Mat&)> back) {
    Node n;
    n.value = std::move(value);
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
    if (loss.tape != this) {
        throw std::invalid_argument("backward: loss lives on a different tape");
    }
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw DimensionError("backward: loss must be 1x1, got " + shapeOf(loss.value()));
    }
    nodes_[static_cast<std::size_t>(loss.id)].grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back) {
            n.back(*this, n.grad);
        }
        if (n.bound != nullptr) {
            n.bound->grad += n.grad;
        }
    }
}

Var matmul(Var a, Var b) {
    requireSameTape(a, b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + shapeOf(a.value()) + " * " +
                             shapeOf(b.value()));
    }
    Mat out = a.value() * b.value();
    int pa = a.id, pb = b.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        t.grad(pa) += g * t.value(pb).transpose();
        t.grad(pb) += t.value(pa).transpose() * g;
    });
}

Var add(Var a, Var b) {
    requireSameShape(a, b, "add");
    Mat out = a.value() + b.value();
    int pa = a.id, pb = b.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        t.grad(pa) += g;
        t.grad(pb) += g;
    });
}

Var sub(Var a, Var b) {
    requireSameShape(a, b, "sub");
    Mat out = a.value() - b.value();
    int pa = a.id, pb = b.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        t.grad(pa) += g;
        t.grad(pb) -= g;
    });
}

Var mulElem(Var a, Var b) {
    requireSameShape(a, b, "mulElem");
    Mat out = a.value().cwiseProduct(b.value());
    int pa = a.id, pb = b.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        t.grad(pa) += g.cwiseProduct(t.value(pb));
        t.grad(pb) += g.cwiseProduct(t.value(pa));
    });
}

Var scale(Var a, double c) {
    Mat out = a.value() * c;
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa, c](Tape& t, const Mat& g) {
        t.grad(pa) += g * c;
    });
}

Var addRowVector(Var a, Var rowVec) {
    requireSameTape(a, rowVec, "addRowVector");
    if (rowVec.rows() != 1 || rowVec.cols() != a.cols()) {
        throw DimensionError("addRowVector: shape mismatch " + shapeOf(a.value()) + " + " +
                             shapeOf(rowVec.value()));
    }
    Mat out = a.value().rowwise() + rowVec.value().row(0);
    int pa = a.id, pb = rowVec.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        t.grad(pa) += g;
        t.grad(pb) += g.colwise().sum();
    });
}

Var transpose(Var a) {
    Mat out = a.value().transpose();
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa](Tape& t, const Mat& g) {
        t.grad(pa) += g.transpose();
    });
}

Var relu(Var a) {
    Mat out = a.value().cwiseMax(0.0);
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa](Tape& t, const Mat& g) {
        t.grad(pa) += g.cwiseProduct((t.value(pa).array() > 0.0).cast<double>().matrix());
    });
}

Var softmaxRows(Var a) {
    const Mat& x = a.value();
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    int pa = a.id;
    int self = static_cast<int>(a.tape->size());
    return a.tape->emplace(std::move(y), [pa, self](Tape& t, const Mat& g) {
        const Mat& yv = t.value(self);
        Mat gx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            double dot = g.row(i).dot(yv.row(i));
            gx.row(i) = (yv.row(i).array() * (g.row(i).array() - dot)).matrix();
        }
        t.grad(pa) += gx;
    });
}

Var logsumexpRows(Var a) {
    const Mat& x = a.value();
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double m = x.row(i).maxCoeff();
        out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    int pa = a.id;
    int self = static_cast<int>(a.tape->size());
    return a.tape->emplace(std::move(out), [pa, self](Tape& t, const Mat& g) {
        const Mat& x = t.value(pa);
        const Mat& l = t.value(self);
        Mat gx(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            gx.row(i) = (g(i, 0) * (x.row(i).array() - l(i, 0)).exp()).matrix();
        }
        t.grad(pa) += gx;
    });
}

Var rowSums(Var a) {
    Mat out = a.value().rowwise().sum();
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa](Tape& t, const Mat& g) {
        Mat& ga = t.grad(pa);
        for (Eigen::Index i = 0; i < ga.rows(); ++i) {
            ga.row(i).array() += g(i, 0);
        }
    });
}

Var sumAll(Var a) {
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa](Tape& t, const Mat& g) {
        t.grad(pa).array() += g(0, 0);
    });
}

Var rowwiseDot(Var a, Var b) {
    requireSameShape(a, b, "rowwiseDot");
    Mat out = a.value().cwiseProduct(b.value()).rowwise().sum();
    int pa = a.id, pb = b.id;
    return a.tape->emplace(std::move(out), [pa, pb](Tape& t, const Mat& g) {
        Mat& ga = t.grad(pa);
        Mat& gb = t.grad(pb);
        for (Eigen::Index i = 0; i < ga.rows(); ++i) {
            ga.row(i) += g(i, 0) * t.value(pb).row(i);
            gb.row(i) += g(i, 0) * t.value(pa).row(i);
        }
    });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.rows() * a.cols()) {
        throw DimensionError("reshape: cannot view " + shapeOf(a.value()) + " as " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    // Row-major storage makes the reshape a contiguous remap.
    Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
    int pa = a.id;
    Eigen::Index ar = a.rows(), ac = a.cols();
    return a.tape->emplace(std::move(out), [pa, ar, ac](Tape& t, const Mat& g) {
        t.grad(pa) += Eigen::Map<const Mat>(g.data(), ar, ac);
    });
}

Var concatCols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concatCols: no parts");
    }
    Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        requireSameTape(parts.front(), p, "concatCols");
        if (p.rows() != rows) {
            throw DimensionError("concatCols: row mismatch " + shapeOf(parts.front().value()) +
                                 " vs " + shapeOf(p.value()));
        }
        cols += p.cols();
    }
    Mat out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> widths;
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        ids.push_back(p.id);
        widths.push_back(p.cols());
        at += p.cols();
    }
    return parts.front().tape->emplace(std::move(out), [ids, widths](Tape& t, const Mat& g) {
        Eigen::Index at = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            t.grad(ids[k]) += g.middleCols(at, widths[k]);
            at += widths[k];
        }
    });
}

Var dropout(Var a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must lie in [0,1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return a; // exact identity, no node recorded
    }
    double keep = 1.0 / (1.0 - rate);
    Mat mask(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
            mask(i, j) = rng.uniform() < rate ? 0.0 : keep;
        }
    }
    Mat out = a.value().cwiseProduct(mask);
    int pa = a.id;
    return a.tape->emplace(std::move(out), [pa, mask](Tape& t, const Mat& g) {
        t.grad(pa) += g.cwiseProduct(mask);
    });
}

Var mse(Var a, Var b) {
    requireSameShape(a, b, "mse");
    double n = static_cast<double>(a.rows() * a.cols());
    return scale(sumSquares(a, b), 1.0 / n);
}

Var sumSquares(Var a, Var b) {
    requireSameShape(a, b, "sumSquares");
    Var d = sub(a, b);
    return sumAll(mulElem(d, d));
}

Var layerNormRows(Var a, double eps) {
    const Mat& x = a.value();
    Eigen::Index c = x.cols();
    Mat y(x.rows(), c);
    Mat invStd(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(c);
        invStd(i, 0) = 1.0 / std::sqrt(var + eps);
        y.row(i) = ((x.row(i).array() - mean) * invStd(i, 0)).matrix();
    }
    int pa = a.id;
    int self = static_cast<int>(a.tape->size());
    return a.tape->emplace(std::move(y), [pa, self, invStd, c](Tape& t, const Mat& g) {
        const Mat& yv = t.value(self);
        Mat gx(g.rows(), g.cols());
        double n = static_cast<double>(c);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            double gMean = g.row(i).mean();
            double gyMean = g.row(i).cwiseProduct(yv.row(i)).sum() / n;
            gx.row(i) =
                (invStd(i, 0) * (g.row(i).array() - gMean - yv.row(i).array() * gyMean)).matrix();
        }
        t.grad(pa) += gx;
    });
}

double gradCheck(const std::function<double(bool)>& run, std::span<Param* const> params,
                 double epsilon) {
    for (Param* p : params) {
        p->zeroGrad();
    }
    double base = run(true);
    if (!std::isfinite(base)) {
        throw std::runtime_error("gradCheck: non-finite loss at the unperturbed point");
    }
    std::vector<Mat> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) {
        analytic.push_back(p->grad);
    }
    double maxErr = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                double orig = p->value(i, j);
                p->value(i, j) = orig + epsilon;
                double up = run(false);
                p->value(i, j) = orig - epsilon;
                double down = run(false);
                p->value(i, j) = orig;
                if (!std::isfinite(up) || !std::isfinite(down)) {
                    throw std::runtime_error("gradCheck: non-finite loss while perturbing " +
                                             p->name);
                }
                double fd = (up - down) / (2.0 * epsilon);
                double an = analytic[k](i, j);
                double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                maxErr = std::max(maxErr, err);
            }
        }
    }
    return maxErr;
}

} // namespace attrformer
