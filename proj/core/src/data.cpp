#include "cfb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

std::vector<double> Dataset::outcomes(Arm arm) const {
    std::vector<double> out;
    for (const auto& r : records) {
        if (r.a == arm) out.push_back(r.y);
    }
    return out;
}

std::size_t Dataset::count(Arm arm) const {
    std::size_t n = 0;
    for (const auto& r : records) {
        if (r.a == arm) ++n;
    }
    return n;
}

EmpiricalDist make_empirical(std::vector<double> sample) {
    if (sample.empty()) throw DomainError("empirical distribution needs at least one value");
    std::sort(sample.begin(), sample.end());
    return EmpiricalDist{std::move(sample)};
}

double ecdf(const EmpiricalDist& d, double y) {
    auto it = std::upper_bound(d.values.begin(), d.values.end(), y);
    return static_cast<double>(it - d.values.begin()) / static_cast<double>(d.values.size());
}

double quantile(const EmpiricalDist& d, double q) {
    if (q < 0.0 || q > 1.0) throw DomainError("quantile level must be in [0, 1]");
    const std::size_t n = d.values.size();
    if (q == 0.0) return d.values.front();
    std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (k == 0) k = 1;
    if (k > n) k = n;
    return d.values[k - 1];
}

double wasserstein1(const EmpiricalDist& a, const EmpiricalDist& b) {
    const std::size_t na = a.values.size();
    const std::size_t nb = b.values.size();
    if (na == nb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < na; ++i) acc += std::fabs(a.values[i] - b.values[i]);
        return acc / static_cast<double>(na);
    }
    // integrate |Fa^{-1}(q) - Fb^{-1}(q)| over the merged quantile partition
    double acc = 0.0;
    double q = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < na && ib < nb) {
        double qa = static_cast<double>(ia + 1) / static_cast<double>(na);
        double qb = static_cast<double>(ib + 1) / static_cast<double>(nb);
        double qn = std::min(qa, qb);
        acc += (qn - q) * std::fabs(a.values[ia] - b.values[ib]);
        q = qn;
        if (qa <= qn) ++ia;
        if (qb <= qn) ++ib;
    }
    return acc;
}

namespace {

struct MixtureComponent {
    double weight;
    double mean;
    double sd;
};

double draw_mixture(Rng& rng, const std::vector<MixtureComponent>& comps) {
    double u = rng.uniform01();
    double acc = 0.0;
    for (const auto& c : comps) {
        acc += c.weight;
        if (u < acc) return rng.normal(c.mean, c.sd);
    }
    return rng.normal(comps.back().mean, comps.back().sd);
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
    Rng root(spec.seed);
    Rng rng0 = root.child(1);
    Rng rng1 = root.child(2);

    std::vector<MixtureComponent> arm0, arm1;
    if (spec.kind == DatasetKind::dataset1) {
        arm0 = {{1.0, 0.0, 1.0}};
        arm1 = {{1.0, 0.0, 1.0}};
    } else {
        arm0 = {{0.7, -0.5, 1.5}, {0.3, 1.5, 0.5}};
        arm1 = {{0.3, -2.5, 0.35}, {0.4, 0.5, 0.75}, {0.3, 2.0, 0.5}};
    }

    Dataset d;
    d.records.reserve(2 * spec.n_per_arm);
    for (std::size_t i = 0; i < spec.n_per_arm; ++i) {
        d.records.push_back({Arm::a0, draw_mixture(rng0, arm0)});
    }
    for (std::size_t i = 0; i < spec.n_per_arm; ++i) {
        d.records.push_back({Arm::a1, draw_mixture(rng1, arm1)});
    }
    return d;
}

void write_csv(const Dataset& d, const std::string& path, const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    if (!comment.empty()) out << "# " << comment << "\n";
    out << "a,y\n";
    char buf[64];
    for (const auto& r : d.records) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", arm_index(r.a), r.y);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path);
}

Dataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    // tolerate a UTF-8 BOM, trailing CR, and leading "#" comment lines
    bool first = true;
    for (;;) {
        if (!std::getline(in, line)) throw IoError(path + ": missing header");
        ++lineno;
        if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        first = false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') continue;
        break;
    }
    if (line != "a,y") throw IoError(path + ": expected header \"a,y\", got \"" + line + "\"");

    Dataset d;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw IoError(path + ":" + std::to_string(lineno) + ": malformed line \"" + line + "\"");
        }
        std::string a_str = line.substr(0, comma);
        std::string y_str = line.substr(comma + 1);
        int a_val;
        double y_val;
        try {
            std::size_t pos = 0;
            a_val = std::stoi(a_str, &pos);
            if (pos != a_str.size()) throw std::invalid_argument(a_str);
            y_val = std::stod(y_str, &pos);
            if (pos != y_str.size()) throw std::invalid_argument(y_str);
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": malformed line \"" + line + "\"");
        }
        if (a_val != 0 && a_val != 1) {
            throw IoError(path + ":" + std::to_string(lineno) + ": unknown arm value " +
                          std::to_string(a_val));
        }
        d.records.push_back({static_cast<Arm>(a_val), y_val});
    }
    return d;
}

}  // namespace cfb
