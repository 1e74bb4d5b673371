#include "treegae/tensor.hpp"

#include "treegae/errors.hpp"

#include <algorithm>
#include <cmath>

namespace treegae {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw DimensionError("matrix " + shape_string() + " given " + std::to_string(values_.size()) +
                             " values");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw DimensionError("ragged matrix literal");
        }
        values_.insert(values_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

bool Matrix::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_string() + " times " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

namespace {

// out += a^T * b without materializing the transpose.
void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto a_row = a.row(k);
        auto b_row = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a_row[i];
            if (aki == 0.0) {
                continue;
            }
            auto out_row = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out_row[j] += aki * b_row[j];
            }
        }
    }
}

// out += a * b^T.
void accumulate_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto a_row = a.row(i);
        auto out_row = out.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto b_row = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a_row[k] * b_row[k];
            }
            out_row[j] += s;
        }
    }
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

template <typename F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = f(src[i]);
    }
    return out;
}

} // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Exp: return "exp";
    case OpKind::Square: return "square";
    case OpKind::Mul: return "mul";
    case OpKind::Divide: return "divide";
    case OpKind::SumAll: return "sum_all";
    case OpKind::Relu: return "relu";
    case OpKind::PairwiseSqDist: return "pairwise_sq_dist";
    }
    return "?";
}

const Matrix& Var::value() const { return tape_->value(*this); }
const Matrix& Var::grad() const { return tape_->grad(*this); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
    if (v.tape_ != this || v.index_ >= nodes_.size()) {
        throw ContractError("variable does not belong to this tape");
    }
}

Var Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.kind = OpKind::Leaf;
    n.needs_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    Node n;
    n.kind = OpKind::MatMul;
    n.lhs = a.index_;
    n.rhs = b.index_;
    n.needs_grad = nodes_[a.index_].needs_grad || nodes_[b.index_].needs_grad;
    n.value = treegae::matmul(nodes_[a.index_].value, nodes_[b.index_].value);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const Matrix& av = nodes_[a.index_].value;
    const Matrix& bv = nodes_[b.index_].value;
    require_same_shape("add", av, bv);
    Node n;
    n.kind = OpKind::Add;
    n.lhs = a.index_;
    n.rhs = b.index_;
    n.needs_grad = nodes_[a.index_].needs_grad || nodes_[b.index_].needs_grad;
    n.value = av;
    auto dst = n.value.values();
    auto src = bv.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    check_owner(a);
    Node n;
    n.kind = OpKind::Scale;
    n.lhs = a.index_;
    n.scalar = c;
    n.needs_grad = nodes_[a.index_].needs_grad;
    n.value = map(nodes_[a.index_].value, [c](double x) { return c * x; });
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
    check_owner(a);
    Node n;
    n.kind = OpKind::AddScalar;
    n.lhs = a.index_;
    n.scalar = c;
    n.needs_grad = nodes_[a.index_].needs_grad;
    n.value = map(nodes_[a.index_].value, [c](double x) { return x + c; });
    return push(std::move(n));
}

Var Tape::exp(Var a) {
    check_owner(a);
    Node n;
    n.kind = OpKind::Exp;
    n.lhs = a.index_;
    n.needs_grad = nodes_[a.index_].needs_grad;
    n.value = map(nodes_[a.index_].value, [](double x) { return std::exp(x); });
    return push(std::move(n));
}

Var Tape::square(Var a) {
    check_owner(a);
    Node n;
    n.kind = OpKind::Square;
    n.lhs = a.index_;
    n.needs_grad = nodes_[a.index_].needs_grad;
    n.value = map(nodes_[a.index_].value, [](double x) { return x * x; });
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const Matrix& av = nodes_[a.index_].value;
    const Matrix& bv = nodes_[b.index_].value;
    require_same_shape("elementwise_mul", av, bv);
    Node n;
    n.kind = OpKind::Mul;
    n.lhs = a.index_;
    n.rhs = b.index_;
    n.needs_grad = nodes_[a.index_].needs_grad || nodes_[b.index_].needs_grad;
    n.value = av;
    auto dst = n.value.values();
    auto src = bv.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= src[i];
    }
    return push(std::move(n));
}

Var Tape::divide(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const Matrix& av = nodes_[a.index_].value;
    const Matrix& bv = nodes_[b.index_].value;
    require_same_shape("divide", av, bv);
    Node n;
    n.kind = OpKind::Divide;
    n.lhs = a.index_;
    n.rhs = b.index_;
    n.needs_grad = nodes_[a.index_].needs_grad || nodes_[b.index_].needs_grad;
    n.value = av;
    auto dst = n.value.values();
    auto src = bv.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] /= src[i];
    }
    return push(std::move(n));
}

Var Tape::sum_all(Var a) {
    check_owner(a);
    Node n;
    n.kind = OpKind::SumAll;
    n.lhs = a.index_;
    n.needs_grad = nodes_[a.index_].needs_grad;
    double s = 0.0;
    for (double x : nodes_[a.index_].value.values()) {
        s += x;
    }
    n.value = Matrix(1, 1, s);
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    check_owner(a);
    Node n;
    n.kind = OpKind::Relu;
    n.lhs = a.index_;
    n.needs_grad = nodes_[a.index_].needs_grad;
    n.value = map(nodes_[a.index_].value, [](double x) { return x > 0.0 ? x : 0.0; });
    return push(std::move(n));
}

Var Tape::pairwise_sq_dist(Var z) {
    check_owner(z);
    const Matrix& zv = nodes_[z.index_].value;
    if (zv.rows() == 0) {
        throw DimensionError("pairwise_sq_dist: empty embedding");
    }
    const std::size_t n_rows = zv.rows();
    Node n;
    n.kind = OpKind::PairwiseSqDist;
    n.lhs = z.index_;
    n.needs_grad = nodes_[z.index_].needs_grad;
    n.value = Matrix(n_rows, n_rows);
    // Each unordered pair is evaluated once and mirrored: exact symmetry and a
    // zero diagonal.
    for (std::size_t i = 0; i < n_rows; ++i) {
        auto zi = zv.row(i);
        for (std::size_t j = i + 1; j < n_rows; ++j) {
            auto zj = zv.row(j);
            double s = 0.0;
            for (std::size_t e = 0; e < zv.cols(); ++e) {
                const double d = zi[e] - zj[e];
                s += d * d;
            }
            n.value(i, j) = s;
            n.value(j, i) = s;
        }
    }
    return push(std::move(n));
}

void Tape::zero_grad() {
    for (auto& n : nodes_) {
        n.grad = Matrix();
    }
    grads_pending_ = false;
}

void Tape::backward(Var root) {
    check_owner(root);
    const Matrix& rv = nodes_[root.index_].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
        throw ContractError("backward: root must be 1x1, got " + rv.shape_string());
    }
    if (grads_pending_) {
        throw ContractError("backward: gradients already accumulated; call zero_grad() first");
    }
    grads_pending_ = true;
    for (auto& n : nodes_) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    nodes_[root.index_].grad(0, 0) = 1.0;
    // Creation order is a topological order, so a reverse sweep visits every
    // consumer before its inputs.
    for (std::size_t k = root.index_ + 1; k-- > 0;) {
        if (nodes_[k].needs_grad) {
            propagate(nodes_[k]);
        }
    }
}

void Tape::propagate(const Node& node) {
    const Matrix& g = node.grad;
    auto accumulate_elementwise = [&](std::size_t target, auto local) {
        Node& in = nodes_[target];
        if (!in.needs_grad) {
            return;
        }
        auto dst = in.grad.values();
        auto gv = g.values();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += gv[i] * local(i);
        }
    };

    switch (node.kind) {
    case OpKind::Leaf:
        break;
    case OpKind::MatMul: {
        Node& a = nodes_[node.lhs];
        Node& b = nodes_[node.rhs];
        if (a.needs_grad) {
            accumulate_a_bt(g, b.value, a.grad);
        }
        if (b.needs_grad) {
            accumulate_at_b(a.value, g, b.grad);
        }
        break;
    }
    case OpKind::Add:
        accumulate_elementwise(node.lhs, [](std::size_t) { return 1.0; });
        accumulate_elementwise(node.rhs, [](std::size_t) { return 1.0; });
        break;
    case OpKind::Scale: {
        const double c = node.scalar;
        accumulate_elementwise(node.lhs, [c](std::size_t) { return c; });
        break;
    }
    case OpKind::AddScalar:
        accumulate_elementwise(node.lhs, [](std::size_t) { return 1.0; });
        break;
    case OpKind::Exp: {
        auto out = node.value.values();
        accumulate_elementwise(node.lhs, [out](std::size_t i) { return out[i]; });
        break;
    }
    case OpKind::Square: {
        auto x = nodes_[node.lhs].value.values();
        accumulate_elementwise(node.lhs, [x](std::size_t i) { return 2.0 * x[i]; });
        break;
    }
    case OpKind::Mul: {
        auto av = nodes_[node.lhs].value.values();
        auto bv = nodes_[node.rhs].value.values();
        accumulate_elementwise(node.lhs, [bv](std::size_t i) { return bv[i]; });
        accumulate_elementwise(node.rhs, [av](std::size_t i) { return av[i]; });
        break;
    }
    case OpKind::Divide: {
        auto av = nodes_[node.lhs].value.values();
        auto bv = nodes_[node.rhs].value.values();
        accumulate_elementwise(node.lhs, [bv](std::size_t i) { return 1.0 / bv[i]; });
        accumulate_elementwise(node.rhs, [av, bv](std::size_t i) { return -av[i] / (bv[i] * bv[i]); });
        break;
    }
    case OpKind::SumAll: {
        Node& a = nodes_[node.lhs];
        if (a.needs_grad) {
            const double g0 = g(0, 0);
            for (double& d : a.grad.values()) {
                d += g0;
            }
        }
        break;
    }
    case OpKind::Relu: {
        auto x = nodes_[node.lhs].value.values();
        accumulate_elementwise(node.lhs, [x](std::size_t i) { return x[i] > 0.0 ? 1.0 : 0.0; });
        break;
    }
    case OpKind::PairwiseSqDist: {
        Node& z = nodes_[node.lhs];
        if (!z.needs_grad) {
            break;
        }
        // d/dz_i of sum_j g_ij |z_i - z_j|^2 + g_ji |z_j - z_i|^2.
        const Matrix& zv = z.value;
        const std::size_t n_rows = zv.rows();
        for (std::size_t i = 0; i < n_rows; ++i) {
            auto zi = zv.row(i);
            auto gi = z.grad.row(i);
            for (std::size_t j = 0; j < n_rows; ++j) {
                if (j == i) {
                    continue;
                }
                const double w = 2.0 * (g(i, j) + g(j, i));
                if (w == 0.0) {
                    continue;
                }
                auto zj = zv.row(j);
                for (std::size_t e = 0; e < zv.cols(); ++e) {
                    gi[e] += w * (zi[e] - zj[e]);
                }
            }
        }
        break;
    }
    }
}

} // namespace treegae
