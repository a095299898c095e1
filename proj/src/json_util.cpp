#include "kcheck/json_util.hpp"

#include <fstream>
#include <sstream>

#include "kcheck/error.hpp"

namespace kcheck {

ojson vec_to_json(const Vec& v) {
    ojson out = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

ojson mat_to_json(const Mat& m) {
    ojson out = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec_to_json(m.row(r).transpose()));
    return out;
}

Vec vec_from_json(const ojson& j) {
    if (!j.is_array()) throw InputError("expected a numeric array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError("expected a numeric array");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Mat mat_from_json(const ojson& j) {
    if (!j.is_array() || j.empty()) throw InputError("expected a nonempty array of rows");
    const Vec first = vec_from_json(j[0]);
    Mat m(static_cast<Eigen::Index>(j.size()), first.size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vec row = vec_from_json(j[r]);
        if (row.size() != first.size()) throw InputError("ragged matrix rows");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

ojson read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return ojson::parse(buf.str());
    } catch (const ojson::parse_error& e) {
        throw InputError(path + ": malformed JSON: " + e.what());
    }
}

void write_json_file(const ojson& doc, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
}

}  // namespace kcheck
