#include "koopman/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "koopman/errors.hpp"

namespace koopman {

namespace {

double ipow(double base, int exp) {
    double r = 1.0;
    for (int k = 0; k < exp; ++k) r *= base;
    return r;
}

std::string monomial_name(const std::vector<int>& exps, Eigen::Index n_state) {
    std::ostringstream os;
    bool any = false;
    for (std::size_t k = 0; k < exps.size(); ++k) {
        if (exps[k] == 0) continue;
        if (any) os << '*';
        const auto idx = static_cast<Eigen::Index>(k);
        if (idx < n_state)
            os << 'x' << (idx + 1);
        else
            os << 'u' << (idx - n_state + 1);
        if (exps[k] > 1) os << '^' << exps[k];
        any = true;
    }
    if (!any) os << '1';
    return os.str();
}

// All exponent vectors of length `vars` with total degree `degree`, in
// descending lexicographic order.
void enumerate_degree(int vars, int degree, std::vector<int>& current, std::size_t pos,
                      std::vector<std::vector<int>>& out) {
    if (pos + 1 == static_cast<std::size_t>(vars)) {
        current[pos] = degree;
        out.push_back(current);
        return;
    }
    for (int e = degree; e >= 0; --e) {
        current[pos] = e;
        enumerate_degree(vars, degree - e, current, pos + 1, out);
    }
}

}  // namespace

Dictionary::Dictionary(std::vector<Observable> observables, Eigen::Index n_state, Eigen::Index n_input,
                       DictionarySpec spec)
    : observables_(std::move(observables)), n_state_(n_state), n_input_(n_input), spec_(std::move(spec)) {
    if (n_state < 1 || n_input < 0)
        throw DimensionError("dictionary: need n_state >= 1 and n_input >= 0");
    if (size() < n_state + n_input)
        throw DimensionError("dictionary: Q must be at least n_state + n_input");
    for (const auto& obs : observables_) {
        if (!obs.eval || !obs.grad_state)
            throw ConfigError("dictionary: observable '" + obs.name + "' lacks eval or grad_state");
    }
    identity_prefix_ = true;
    for (Eigen::Index k = 0; k < n_state + n_input; ++k) {
        const auto& tag = observables_[static_cast<std::size_t>(k)].identity_of;
        if (!tag || *tag != k) {
            identity_prefix_ = false;
            break;
        }
    }
}

void Dictionary::check_dims(const VectorRef& x, const VectorRef& u) const {
    if (x.size() != n_state_ || u.size() != n_input_) {
        std::ostringstream os;
        os << "dictionary: expected state/input of size " << n_state_ << "/" << n_input_ << ", got "
           << x.size() << "/" << u.size();
        throw DimensionError(os.str());
    }
}

void Dictionary::evaluate_into(const VectorRef& x, const VectorRef& u, Eigen::Ref<Eigen::RowVectorXd> out) const {
    check_dims(x, u);
    if (out.size() != size()) throw DimensionError("dictionary: output row has wrong length");
    for (Eigen::Index q = 0; q < size(); ++q) {
        const double v = observables_[static_cast<std::size_t>(q)].eval(x, u);
        if (!std::isfinite(v))
            throw NonFiniteError("dictionary: observable '" + observables_[static_cast<std::size_t>(q)].name +
                                 "' is not finite");
        out[q] = v;
    }
}

Eigen::RowVectorXd Dictionary::evaluate(const VectorRef& x, const VectorRef& u) const {
    Eigen::RowVectorXd psi(size());
    evaluate_into(x, u, psi);
    return psi;
}

Eigen::MatrixXd Dictionary::jacobian_state(const VectorRef& x, const VectorRef& u) const {
    check_dims(x, u);
    Eigen::MatrixXd jac(size(), n_state_);
    Eigen::RowVectorXd row(n_state_);
    for (Eigen::Index q = 0; q < size(); ++q) {
        row.setZero();
        observables_[static_cast<std::size_t>(q)].grad_state(x, u, row);
        if (!row.allFinite())
            throw NonFiniteError("dictionary: gradient of '" + observables_[static_cast<std::size_t>(q)].name +
                                 "' is not finite");
        jac.row(q) = row;
    }
    return jac;
}

Observable make_monomial(std::vector<int> exponents, Eigen::Index n_state) {
    Observable obs;
    obs.name = monomial_name(exponents, n_state);
    int degree = 0;
    Eigen::Index single = -1;
    for (std::size_t k = 0; k < exponents.size(); ++k) {
        if (exponents[k] < 0) throw ConfigError("monomial: negative exponent");
        degree += exponents[k];
        if (exponents[k] == 1) single = static_cast<Eigen::Index>(k);
    }
    if (degree == 1) obs.identity_of = single;

    obs.eval = [exponents, n_state](const VectorRef& x, const VectorRef& u) {
        double v = 1.0;
        for (std::size_t k = 0; k < exponents.size(); ++k) {
            if (exponents[k] == 0) continue;
            const auto idx = static_cast<Eigen::Index>(k);
            const double z = idx < n_state ? x[idx] : u[idx - n_state];
            v *= ipow(z, exponents[k]);
        }
        return v;
    };
    obs.grad_state = [exponents, n_state](const VectorRef& x, const VectorRef& u,
                                          Eigen::Ref<Eigen::RowVectorXd> out) {
        const auto coord = [&](std::size_t k) {
            const auto idx = static_cast<Eigen::Index>(k);
            return idx < n_state ? x[idx] : u[idx - n_state];
        };
        for (Eigen::Index i = 0; i < n_state; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            if (exponents[ii] == 0) {
                out[i] = 0.0;
                continue;
            }
            double v = exponents[ii] * ipow(x[i], exponents[ii] - 1);
            for (std::size_t k = 0; k < exponents.size(); ++k) {
                if (k == ii || exponents[k] == 0) continue;
                v *= ipow(coord(k), exponents[k]);
            }
            out[i] = v;
        }
    };
    return obs;
}

Dictionary build_poly_dictionary(Eigen::Index n_state, Eigen::Index n_input, int max_degree) {
    if (max_degree < 1) throw ConfigError("poly dictionary: max_degree must be >= 1");
    if (n_state < 1 || n_input < 0) throw DimensionError("poly dictionary: bad dimensions");
    const int vars = static_cast<int>(n_state + n_input);

    std::vector<Observable> obs;
    for (int k = 0; k < vars; ++k) {
        std::vector<int> e(static_cast<std::size_t>(vars), 0);
        e[static_cast<std::size_t>(k)] = 1;
        obs.push_back(make_monomial(std::move(e), n_state));
    }
    obs.push_back(make_monomial(std::vector<int>(static_cast<std::size_t>(vars), 0), n_state));
    for (int d = 2; d <= max_degree; ++d) {
        std::vector<std::vector<int>> level;
        std::vector<int> cur(static_cast<std::size_t>(vars), 0);
        enumerate_degree(vars, d, cur, 0, level);
        for (auto& e : level) obs.push_back(make_monomial(std::move(e), n_state));
    }
    return Dictionary(std::move(obs), n_state, n_input, DictionarySpec{"poly", max_degree});
}

Dictionary dictionary_from_spec(const DictionarySpec& spec, Eigen::Index n_state, Eigen::Index n_input) {
    if (spec.type == "poly") return build_poly_dictionary(n_state, n_input, spec.degree);
    throw ConfigError("dictionary: cannot rebuild dictionary of type '" + spec.type + "'");
}

}  // namespace koopman
