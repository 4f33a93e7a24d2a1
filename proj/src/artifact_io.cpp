#include "koopman/artifact_io.hpp"

#include <fstream>
#include <iterator>

#include "koopman/errors.hpp"

namespace koopman {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "koopman-robust/model";
constexpr const char* kArtifactFormat = "koopman-robust/artifacts";
constexpr int kVersion = 1;

json real_matrix(const Eigen::MatrixXd& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd real_matrix(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("artifact: matrix size mismatch");
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json complex_matrix(const Eigen::MatrixXcd& m) {
    const Eigen::MatrixXd re = m.real();
    const Eigen::MatrixXd im = m.imag();
    return {{"re", real_matrix(re)}, {"im", real_matrix(im)}};
}

Eigen::MatrixXcd complex_matrix(const json& j) {
    const Eigen::MatrixXd re = real_matrix(j.at("re"));
    const Eigen::MatrixXd im = real_matrix(j.at("im"));
    if (re.rows() != im.rows() || re.cols() != im.cols()) throw IoError("artifact: complex matrix parts differ");
    Eigen::MatrixXcd out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
}

template <typename M, typename Fn>
json matrix_list(const std::vector<M>& list, Fn&& fn) {
    json arr = json::array();
    for (const auto& m : list) arr.push_back(fn(m));
    return arr;
}

void check_header(const json& j, const char* format) {
    if (!j.contains("format") || j.at("format") != format)
        throw IoError(std::string("artifact: expected format '") + format + "'");
    if (j.at("version").get<int>() != kVersion) throw IoError("artifact: unsupported version");
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

json parse_cbor(const std::filesystem::path& path) {
    try {
        return json::from_cbor(read_bytes(path));
    } catch (const json::exception& e) {
        throw IoError("artifact: " + path.string() + " is not valid CBOR: " + e.what());
    }
}

}  // namespace

json noise_to_json(const NoiseSpec& noise) {
    return {{"family", to_string(noise.family)},
            {"mean", noise.mean},
            {"stddev", noise.stddev},
            {"lo", noise.lo},
            {"hi", noise.hi},
            {"random_sign", noise.random_sign},
            {"substitution", to_string(noise.substitution)},
            {"n_samples", noise.n_samples},
            {"seed", noise.seed}};
}

NoiseSpec noise_from_json(const json& j) {
    NoiseSpec n;
    n.family = noise_family_from_string(j.value("family", std::string("uniform")));
    n.mean = j.value("mean", std::vector<double>{});
    n.stddev = j.value("stddev", std::vector<double>{});
    n.lo = j.value("lo", std::vector<double>{});
    n.hi = j.value("hi", std::vector<double>{});
    if (n.family == NoiseFamily::uniform && n.lo.empty()) n.lo.assign(n.hi.size(), 0.0);
    n.random_sign = j.value("random_sign", true);
    n.substitution = noise_substitution_from_string(j.value("substitution", std::string("resample")));
    n.n_samples = j.value("n_samples", 5);
    n.seed = j.value("seed", std::uint64_t{0});
    n.validate();
    return n;
}

json model_to_json(const KoopmanModel& model) {
    if (model.dict.spec().type != "poly")
        throw IoError("artifact: only polynomial dictionaries can be serialized (got '" + model.dict.spec().type + "')");
    const Eigen::MatrixXcd eig = model.spectrum.eigvals;
    return {{"format", kModelFormat},
            {"version", kVersion},
            {"dictionary",
             {{"type", model.dict.spec().type},
              {"degree", model.dict.spec().degree},
              {"n_state", model.dict.n_state()},
              {"n_input", model.dict.n_input()}}},
            {"options",
             {{"svd_tol", model.options.svd_tol},
              {"degeneracy_tol", model.options.degeneracy_tol},
              {"imag_tol", model.options.imag_tol}}},
            {"seed", model.seed},
            {"K", real_matrix(model.K)},
            {"G", real_matrix(model.G)},
            {"A", real_matrix(model.A)},
            {"G_pinv", real_matrix(model.G_pinv)},
            {"eigvals", complex_matrix(eig)},
            {"right", complex_matrix(model.spectrum.right)},
            {"left", complex_matrix(model.spectrum.left)},
            {"B", real_matrix(model.B)},
            {"F", complex_matrix(model.F)}};
}

KoopmanModel model_from_json(const json& j) {
    check_header(j, kModelFormat);
    const auto& d = j.at("dictionary");
    DictionarySpec spec{d.at("type").get<std::string>(), d.at("degree").get<int>()};
    Dictionary dict = dictionary_from_spec(spec, d.at("n_state").get<Eigen::Index>(), d.at("n_input").get<Eigen::Index>());
    EdmdOptions options;
    options.svd_tol = j.at("options").at("svd_tol").get<double>();
    options.degeneracy_tol = j.at("options").at("degeneracy_tol").get<double>();
    options.imag_tol = j.at("options").at("imag_tol").get<double>();
    SpectralData spectrum;
    spectrum.eigvals = complex_matrix(j.at("eigvals")).col(0);
    spectrum.right = complex_matrix(j.at("right"));
    spectrum.left = complex_matrix(j.at("left"));
    KoopmanModel model{std::move(dict),
                       real_matrix(j.at("G")),
                       real_matrix(j.at("A")),
                       real_matrix(j.at("G_pinv")),
                       real_matrix(j.at("K")),
                       std::move(spectrum),
                       real_matrix(j.at("B")),
                       complex_matrix(j.at("F")),
                       options,
                       j.at("seed").get<std::uint64_t>()};
    const Eigen::Index Q = model.dict.size();
    if (model.K.rows() != Q || model.K.cols() != Q || model.F.rows() != Q)
        throw IoError("artifact: model matrices do not match the dictionary size");
    return model;
}

json artifacts_to_json(const TrainedArtifacts& a) {
    const auto& s = a.sens;
    json stages = json::array();
    for (const auto& [name, secs] : a.meta.stage_seconds) stages.push_back({{"stage", name}, {"seconds", secs}});
    return {{"format", kArtifactFormat},
            {"version", kVersion},
            {"model", model_to_json(a.model)},
            {"noise", noise_to_json(a.noise)},
            {"meta",
             {{"M", a.meta.M},
              {"seed", a.meta.seed},
              {"dictionary", {{"type", a.meta.dict_spec.type}, {"degree", a.meta.dict_spec.degree}}},
              {"stage_seconds", std::move(stages)}}},
            {"sensitivity",
             {{"delta_K", matrix_list(s.delta_K, [](const Eigen::MatrixXd& m) { return real_matrix(m); })},
              {"inv_gap", complex_matrix(s.eigen.inv_gap)},
              {"c_lambda", matrix_list(s.eigen.c_lambda, [](const Eigen::MatrixXcd& m) { return complex_matrix(m); })},
              {"xi_factor",
               matrix_list(s.eigen.xi_factor, [](const Eigen::MatrixXcd& m) { return complex_matrix(m); })},
              {"w_factor", matrix_list(s.eigen.w_factor, [](const Eigen::MatrixXcd& m) { return complex_matrix(m); })},
              {"model_fingerprint", s.model_fingerprint}}},
            {"error_kernel", complex_matrix(a.error_kernel)}};
}

TrainedArtifacts artifacts_from_json(const json& j) {
    check_header(j, kArtifactFormat);
    KoopmanModel model = model_from_json(j.at("model"));
    NoiseSpec noise = noise_from_json(j.at("noise"));

    TrainingMetadata meta;
    const auto& m = j.at("meta");
    meta.M = m.at("M").get<Eigen::Index>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.dict_spec = {m.at("dictionary").at("type").get<std::string>(), m.at("dictionary").at("degree").get<int>()};
    for (const auto& st : m.at("stage_seconds"))
        meta.stage_seconds.emplace_back(st.at("stage").get<std::string>(), st.at("seconds").get<double>());

    KoopmanSensitivity sens;
    const auto& s = j.at("sensitivity");
    for (const auto& dk : s.at("delta_K")) sens.delta_K.push_back(real_matrix(dk));
    sens.eigen.inv_gap = complex_matrix(s.at("inv_gap"));
    for (const auto& c : s.at("c_lambda")) sens.eigen.c_lambda.push_back(complex_matrix(c));
    for (const auto& c : s.at("xi_factor")) sens.eigen.xi_factor.push_back(complex_matrix(c));
    for (const auto& c : s.at("w_factor")) sens.eigen.w_factor.push_back(complex_matrix(c));
    sens.eigen.spectrum = model.spectrum;
    sens.model_fingerprint = s.at("model_fingerprint").get<std::uint64_t>();
    if (sens.model_fingerprint != model_fingerprint(model))
        throw IoError("artifact: sensitivity fingerprint does not match the stored model");

    Eigen::MatrixXcd kernel = complex_matrix(j.at("error_kernel"));
    return TrainedArtifacts{std::move(model), std::move(sens), std::move(noise), std::move(meta), std::move(kernel)};
}

void save_model(const KoopmanModel& model, const std::filesystem::path& path) {
    write_bytes(json::to_cbor(model_to_json(model)), path);
}

KoopmanModel load_model(const std::filesystem::path& path) { return model_from_json(parse_cbor(path)); }

void save_artifacts(const TrainedArtifacts& artifacts, const std::filesystem::path& path) {
    write_bytes(json::to_cbor(artifacts_to_json(artifacts)), path);
}

TrainedArtifacts load_artifacts(const std::filesystem::path& path) { return artifacts_from_json(parse_cbor(path)); }

}  // namespace koopman
