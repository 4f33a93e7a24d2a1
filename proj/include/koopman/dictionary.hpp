#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace koopman {

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Descriptor that lets a serialized model rebuild its dictionary.
/// Only "poly" dictionaries can be reconstructed; hand-assembled ones are "custom".
struct DictionarySpec {
    std::string type = "custom";
    int degree = 0;

    bool operator==(const DictionarySpec&) const = default;
};

/// One scalar observable psi(x, u) together with its analytic state gradient.
struct Observable {
    using EvalFn = std::function<double(const VectorRef& x, const VectorRef& u)>;
    // Writes d psi / d x (length n_state) into `out`.
    using GradFn = std::function<void(const VectorRef& x, const VectorRef& u,
                                      Eigen::Ref<Eigen::RowVectorXd> out)>;

    std::string name;
    EvalFn eval;
    GradFn grad_state;
    /// Set when the observable returns coordinate k of the stacked vector [x; u].
    std::optional<Eigen::Index> identity_of;
};

/// Ordered, immutable set of Q observables.
class Dictionary {
public:
    Dictionary(std::vector<Observable> observables, Eigen::Index n_state, Eigen::Index n_input,
               DictionarySpec spec = {});

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(observables_.size()); }
    Eigen::Index n_state() const noexcept { return n_state_; }
    Eigen::Index n_input() const noexcept { return n_input_; }
    /// True when observables 0..n_state+n_input-1 are exactly [x; u].
    bool identity_prefix() const noexcept { return identity_prefix_; }
    const DictionarySpec& spec() const noexcept { return spec_; }
    const Observable& operator[](Eigen::Index q) const { return observables_.at(static_cast<std::size_t>(q)); }
    const std::vector<Observable>& observables() const noexcept { return observables_; }

    /// Psi(x, u) as a row vector of length Q.
    Eigen::RowVectorXd evaluate(const VectorRef& x, const VectorRef& u) const;
    /// In-place variant; `out` must have length Q.
    void evaluate_into(const VectorRef& x, const VectorRef& u, Eigen::Ref<Eigen::RowVectorXd> out) const;

    /// d Psi / d x, a Q x n_state matrix whose row q is the gradient of observable q.
    Eigen::MatrixXd jacobian_state(const VectorRef& x, const VectorRef& u) const;

private:
    void check_dims(const VectorRef& x, const VectorRef& u) const;

    std::vector<Observable> observables_;
    Eigen::Index n_state_;
    Eigen::Index n_input_;
    bool identity_prefix_ = false;
    DictionarySpec spec_;
};

/// Observable for the monomial prod_k z_k^{exponents[k]} over z = [x; u].
Observable make_monomial(std::vector<int> exponents, Eigen::Index n_state);

/// Identity-prefixed total-degree monomial basis with a constant term.
/// Order: x_1..x_nx, u_1..u_nu, 1, then the remaining monomials by ascending
/// degree and, within a degree, descending lexicographic exponent order.
Dictionary build_poly_dictionary(Eigen::Index n_state, Eigen::Index n_input, int max_degree);

/// Rebuilds a dictionary from its serialized descriptor.
Dictionary dictionary_from_spec(const DictionarySpec& spec, Eigen::Index n_state, Eigen::Index n_input);

}  // namespace koopman
