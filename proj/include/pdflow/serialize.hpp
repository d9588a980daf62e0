#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pdflow/errors.hpp"
#include "pdflow/problem.hpp"

namespace pdflow {

using Json = nlohmann::json;

/// Shortest round-trip decimal formatting of a double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline Mat mat_from_json(const Json& j, int rows, int cols, const char* name) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw ContractError(std::string(name) + ": expected " + std::to_string(rows) +
                            " rows");
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const auto& row = j.at(i);
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw ContractError(std::string(name) + ": expected " +
                                std::to_string(cols) + " columns");
        for (int c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
    }
    return m;
}

inline Vec vec_from_json(const Json& j, int n, const char* name) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ContractError(std::string(name) + ": expected length " +
                            std::to_string(n));
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = j.at(i).get<double>();
    return v;
}

inline Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json vec_to_json(const Vec& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known,
                                const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ContractError(std::string(where) + ": unknown key '" + it.key() + "'");
    }
}

/// Problem document: {n1,n2,m,A,B,b,quadratic:{P,q,R,s}}.
inline ProblemInstance problem_from_json(const Json& j) {
    reject_unknown_keys(j, {"n1", "n2", "m", "A", "B", "b", "quadratic"}, "problem");
    const int n1 = j.at("n1").get<int>();
    const int n2 = j.at("n2").get<int>();
    const int m = j.at("m").get<int>();
    const Mat A = mat_from_json(j.at("A"), m, n1, "A");
    const Mat B = mat_from_json(j.at("B"), m, n2, "B");
    const Vec b = vec_from_json(j.at("b"), m, "b");
    const Json& quad = j.at("quadratic");
    reject_unknown_keys(quad, {"P", "q", "R", "s"}, "quadratic");
    const Mat P = mat_from_json(quad.at("P"), n1, n1, "P");
    const Vec q = vec_from_json(quad.at("q"), n1, "q");
    const Mat R = mat_from_json(quad.at("R"), n2, n2, "R");
    const Vec s = vec_from_json(quad.at("s"), n2, "s");
    return make_quadratic_problem(P, q, R, s, A, B, b);
}

inline Json problem_to_json(const ProblemInstance& inst) {
    Json j;
    j["n1"] = inst.problem.n1;
    j["n2"] = inst.problem.n2;
    j["m"] = inst.problem.m;
    j["A"] = mat_to_json(inst.problem.A);
    j["B"] = mat_to_json(inst.problem.B);
    j["b"] = vec_to_json(inst.problem.b);
    j["quadratic"] = {{"P", mat_to_json(inst.quadratic.P)},
                      {"q", vec_to_json(inst.quadratic.q)},
                      {"R", mat_to_json(inst.quadratic.R)},
                      {"s", vec_to_json(inst.quadratic.s)}};
    return j;
}

} // namespace pdflow
