#pragma once

// Dense row-major matrices and a tape-based reverse-mode differentiator.
//
// A Tape records every operation in creation order, so inputs always precede
// their consumers and the recorded graph is acyclic by construction. A tape is
// rebuilt for each forward pass.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace treegae {

class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    Matrix transposed() const;
    bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    bool all_finite() const;

    /// "RxC", used in diagnostics.
    std::string shape_string() const;

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// Plain (non-differentiable) matrix product.
Matrix matmul(const Matrix& a, const Matrix& b);

enum class OpKind {
    Leaf,
    MatMul,
    Add,
    Scale,
    AddScalar,
    Exp,
    Square,
    Mul,
    Divide,
    SumAll,
    Relu,
    PairwiseSqDist,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
  public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t index() const { return index_; }
    const Matrix& value() const;
    const Matrix& grad() const;

  private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Records a leaf. Constants should pass requires_grad = false so no
    /// gradient work is spent on them.
    Var leaf(Matrix value, bool requires_grad = true);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var exp(Var a);
    Var square(Var a);
    Var mul(Var a, Var b);
    Var divide(Var a, Var b);
    Var sum_all(Var a);
    Var relu(Var a);
    Var pairwise_sq_dist(Var z);

    /// Accumulates d(root)/d(node) into every node's gradient. Root must be
    /// 1x1. Calling backward again requires zero_grad() first.
    void backward(Var root);
    void zero_grad();

    const Matrix& value(Var v) const { return nodes_.at(v.index_).value; }
    const Matrix& grad(Var v) const { return nodes_.at(v.index_).grad; }
    OpKind kind(Var v) const { return nodes_.at(v.index_).kind; }
    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::size_t lhs = 0;
        std::size_t rhs = 0;
        double scalar = 0.0;
        bool needs_grad = false;
        Matrix value;
        Matrix grad;
    };

    Var push(Node node);
    void check_owner(Var v) const;
    void propagate(const Node& node);

    std::vector<Node> nodes_;
    bool grads_pending_ = false;
};

// Free-function spellings so model code reads like the formulas it encodes.
inline Var matmul(Var a, Var b) { return a.tape().matmul(a, b); }
inline Var add(Var a, Var b) { return a.tape().add(a, b); }
inline Var scale(Var a, double c) { return a.tape().scale(a, c); }
inline Var add_scalar(Var a, double c) { return a.tape().add_scalar(a, c); }
inline Var elementwise_exp(Var a) { return a.tape().exp(a); }
inline Var elementwise_square(Var a) { return a.tape().square(a); }
inline Var elementwise_mul(Var a, Var b) { return a.tape().mul(a, b); }
inline Var divide(Var a, Var b) { return a.tape().divide(a, b); }
inline Var sum_all(Var a) { return a.tape().sum_all(a); }
inline Var relu(Var a) { return a.tape().relu(a); }
inline Var pairwise_sq_dist(Var z) { return z.tape().pairwise_sq_dist(z); }

} // namespace treegae
