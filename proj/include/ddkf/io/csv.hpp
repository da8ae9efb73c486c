#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/trajectory.hpp"

namespace ddkf::io {

/// Trajectory CSV: header row of role-prefixed channel names ("u:", "y:",
/// "w:", "e:"), one row per time step, '.' decimal separator, 17 significant
/// digits so doubles round-trip exactly.
struct TrajectoryBundle {
    std::optional<Trajectory> u, y, w, e;

    const Trajectory& require(char role) const {
        const std::optional<Trajectory>* t = nullptr;
        switch (role) {
            case 'u': t = &u; break;
            case 'y': t = &y; break;
            case 'w': t = &w; break;
            case 'e': t = &e; break;
        }
        detail::require(t != nullptr && t->has_value(), ErrorCategory::schema_violation,
                        std::string("trajectory file is missing '") + role + ":' channels");
        return **t;
    }
};

namespace detail_csv {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail_csv

/// Writes channels of several roles side by side; columns appear in the
/// given order. The write is atomic (temp file + rename).
inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const std::vector<std::pair<char, const Trajectory*>>& parts) {
    detail::require(!parts.empty(), ErrorCategory::usage, "write_trajectory_csv: no channels");
    const Eigen::Index len = parts.front().second->length();
    for (const auto& [role, traj] : parts)
        detail::require(traj->length() == len, ErrorCategory::dimension_mismatch,
                        "write_trajectory_csv: lengths differ");

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        detail::require(out.good(), ErrorCategory::io_error,
                        "cannot open for writing: " + tmp.string());
        bool first = true;
        for (const auto& [role, traj] : parts)
            for (const auto& name : traj->channel_names()) {
                if (!first) out << ',';
                out << role << ':' << name;
                first = false;
            }
        out << '\n';
        for (Eigen::Index t = 0; t < len; ++t) {
            first = true;
            for (const auto& [role, traj] : parts)
                for (Eigen::Index ch = 0; ch < traj->channels(); ++ch) {
                    if (!first) out << ',';
                    out << detail_csv::format_double(traj->samples()(ch, t));
                    first = false;
                }
            out << '\n';
        }
        detail::require(out.good(), ErrorCategory::io_error,
                        "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline TrajectoryBundle read_trajectory_csv(const std::filesystem::path& path,
                                            std::optional<double> dt = std::nullopt) {
    std::ifstream in(path);
    detail::require(in.good(), ErrorCategory::io_error, "cannot open: " + path.string());

    std::string header;
    detail::require(static_cast<bool>(std::getline(in, header)), ErrorCategory::schema_violation,
                    "empty trajectory file: " + path.string());
    if (!header.empty() && header.back() == '\r') header.pop_back();

    struct Column {
        char role;
        std::string name;
    };
    std::vector<Column> columns;
    for (const std::string& token : detail_csv::split(header, ',')) {
        detail::require(token.size() >= 2 && token[1] == ':' &&
                            (token[0] == 'u' || token[0] == 'y' || token[0] == 'w' ||
                             token[0] == 'e'),
                        ErrorCategory::schema_violation,
                        "bad channel header '" + token + "' (want u:/y:/w:/e: prefixes)");
        columns.push_back({token[0], token.substr(2)});
    }

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail_csv::split(line, ',');
        detail::require(fields.size() == columns.size(), ErrorCategory::schema_violation,
                        "row with wrong field count in " + path.string());
        std::vector<double> row;
        row.reserve(fields.size());
        for (const std::string& f : fields) {
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            detail::require(end != f.c_str() && *end == '\0', ErrorCategory::schema_violation,
                            "bad numeric field '" + f + "' in " + path.string());
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    detail::require(!rows.empty(), ErrorCategory::insufficient_data,
                    "no samples in " + path.string());

    TrajectoryBundle bundle;
    for (char role : {'u', 'y', 'w', 'e'}) {
        std::vector<std::size_t> idx;
        std::vector<std::string> names;
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c].role == role) {
                idx.push_back(c);
                names.push_back(columns[c].name);
            }
        if (idx.empty()) continue;
        Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()),
                          static_cast<Eigen::Index>(rows.size()));
        for (std::size_t t = 0; t < rows.size(); ++t)
            for (std::size_t c = 0; c < idx.size(); ++c)
                m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) =
                    rows[t][idx[c]];
        Trajectory traj(std::move(m), std::move(names), dt);
        switch (role) {
            case 'u': bundle.u = std::move(traj); break;
            case 'y': bundle.y = std::move(traj); break;
            case 'w': bundle.w = std::move(traj); break;
            case 'e': bundle.e = std::move(traj); break;
        }
    }
    return bundle;
}

} // namespace ddkf::io
