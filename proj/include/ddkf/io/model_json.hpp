#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "ddkf/ddss.hpp"
#include "ddkf/errors.hpp"
#include "ddkf/kalman.hpp"
#include "ddkf/smm.hpp"

namespace ddkf::io {

using nlohmann::json;

/// Matrices travel as named containers with explicit dimensions and
/// row-major data; nlohmann serializes doubles shortest-round-trip, so the
/// encoding is lossless.
inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = std::move(data);
    return j;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    detail::require(j.is_object() && j.contains("rows") && j.contains("cols") &&
                        j.contains("data") && j["data"].is_array(),
                    ErrorCategory::schema_violation, "malformed matrix object");
    const Eigen::Index rows = j["rows"].get<Eigen::Index>();
    const Eigen::Index cols = j["cols"].get<Eigen::Index>();
    const auto& data = j["data"];
    detail::require(rows >= 0 && cols >= 0 &&
                        static_cast<Eigen::Index>(data.size()) == rows * cols,
                    ErrorCategory::schema_violation, "matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[at++].get<double>();
    return m;
}

inline void write_json_atomic(const std::filesystem::path& path, const json& j) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        detail::require(out.good(), ErrorCategory::io_error,
                        "cannot open for writing: " + tmp.string());
        out << j.dump(2) << '\n';
        detail::require(out.good(), ErrorCategory::io_error, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require(in.good(), ErrorCategory::io_error, "cannot open: " + path.string());
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    detail::require(!j.is_discarded(), ErrorCategory::schema_violation,
                    "invalid JSON in " + path.string());
    return j;
}

/// Everything `predict` needs, plus build-time diagnostics.
struct ModelBundle {
    ParsimoniousSMM smm;
    DataStateSpace ddss;
    Eigen::MatrixXd lambda;
    Eigen::MatrixXd gain;
    Eigen::MatrixXd riccati;
    NoiseModel noise;
    json diagnostics;
};

inline json model_to_json(const ModelBundle& m, const std::string& tool_version) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "ddkf-model";
    j["tool_version"] = tool_version;
    j["horizon"] = {{"T_p", m.smm.horizon.T_p},
                    {"T_f", m.smm.horizon.T_f},
                    {"n_x_bar", m.smm.horizon.n_x_bar},
                    {"n_u", m.smm.horizon.n_u},
                    {"n_y", m.smm.horizon.n_y}};
    json blocks;
    blocks["L_up"] = matrix_to_json(m.smm.L_up);
    blocks["L_yup"] = matrix_to_json(m.smm.L_yup);
    blocks["L_yp"] = matrix_to_json(m.smm.L_yp);
    blocks["S_uu"] = matrix_to_json(m.smm.S_uu);
    blocks["S_uy"] = matrix_to_json(m.smm.S_uy);
    blocks["L_uf"] = matrix_to_json(m.smm.L_uf);
    blocks["S_yu"] = matrix_to_json(m.smm.S_yu);
    blocks["S_yy"] = matrix_to_json(m.smm.S_yy);
    blocks["L_yuf"] = matrix_to_json(m.smm.L_yuf);
    j["smm"] = std::move(blocks);
    j["ddss"] = {{"A_p", matrix_to_json(m.ddss.A_p)},
                 {"B_up", matrix_to_json(m.ddss.B_up)},
                 {"B_ep", matrix_to_json(m.ddss.B_ep)},
                 {"C_p", matrix_to_json(m.ddss.C_p)}};
    j["kalman"] = {{"lambda", matrix_to_json(m.lambda)},
                   {"K_pred", matrix_to_json(m.gain)},
                   {"P", matrix_to_json(m.riccati)},
                   {"Lambda1", matrix_to_json(m.noise.Lambda1)},
                   {"Lambda2", matrix_to_json(m.noise.Lambda2)},
                   {"Lambda12", matrix_to_json(m.noise.Lambda12)}};
    j["diagnostics"] = m.diagnostics;
    return j;
}

inline ModelBundle model_from_json(const json& j) {
    detail::require(j.is_object() && j.value("kind", "") == "ddkf-model" &&
                        j.value("schema_version", 0) == 1,
                    ErrorCategory::schema_violation, "not a ddkf-model file");
    ModelBundle m;
    const json& hz = j.at("horizon");
    m.smm.horizon = HorizonSpec{.T_p = hz.at("T_p").get<Eigen::Index>(),
                                .T_f = hz.at("T_f").get<Eigen::Index>(),
                                .n_x_bar = hz.at("n_x_bar").get<Eigen::Index>(),
                                .n_u = hz.at("n_u").get<Eigen::Index>(),
                                .n_y = hz.at("n_y").get<Eigen::Index>()};
    m.smm.horizon.validate();
    const json& blocks = j.at("smm");
    m.smm.L_up = matrix_from_json(blocks.at("L_up"));
    m.smm.L_yup = matrix_from_json(blocks.at("L_yup"));
    m.smm.L_yp = matrix_from_json(blocks.at("L_yp"));
    m.smm.S_uu = matrix_from_json(blocks.at("S_uu"));
    m.smm.S_uy = matrix_from_json(blocks.at("S_uy"));
    m.smm.L_uf = matrix_from_json(blocks.at("L_uf"));
    m.smm.S_yu = matrix_from_json(blocks.at("S_yu"));
    m.smm.S_yy = matrix_from_json(blocks.at("S_yy"));
    m.smm.L_yuf = matrix_from_json(blocks.at("L_yuf"));
    const json& dd = j.at("ddss");
    m.ddss.A_p = matrix_from_json(dd.at("A_p"));
    m.ddss.B_up = matrix_from_json(dd.at("B_up"));
    m.ddss.B_ep = matrix_from_json(dd.at("B_ep"));
    m.ddss.C_p = matrix_from_json(dd.at("C_p"));
    m.ddss.n_u = m.smm.horizon.n_u;
    m.ddss.n_y = m.smm.horizon.n_y;
    m.ddss.n_x_bar = m.smm.horizon.n_x_bar;
    m.ddss.T_p = m.smm.horizon.T_p;
    m.ddss.C_eff = m.ddss.C_p * m.ddss.A_p;
    m.ddss.D_u_eff = m.ddss.C_p * m.ddss.B_up;
    m.ddss.D_e_eff = m.ddss.C_p * m.ddss.B_ep;
    const json& kal = j.at("kalman");
    m.lambda = matrix_from_json(kal.at("lambda"));
    m.gain = matrix_from_json(kal.at("K_pred"));
    m.riccati = matrix_from_json(kal.at("P"));
    m.noise.Lambda = m.lambda;
    m.noise.Lambda1 = matrix_from_json(kal.at("Lambda1"));
    m.noise.Lambda2 = matrix_from_json(kal.at("Lambda2"));
    m.noise.Lambda12 = matrix_from_json(kal.at("Lambda12"));
    m.diagnostics = j.value("diagnostics", json::object());
    return m;
}

} // namespace ddkf::io
