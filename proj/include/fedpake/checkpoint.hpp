#pragma once

/// @file checkpoint.hpp
/// @brief Plain-text ModelParams checkpoints.
///
/// Format (line oriented, `#` starts a comment line):
///
///     fedpake-checkpoint 1
///     layers <L>
///     layer <name> <rank> <d0> <d1> ...
///     <value>            one per line, %.17g, row-major
///     ...
///
/// Layer names must not contain whitespace. Seventeen significant digits make
/// every double round-trip bit-exactly.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fedpake/params.hpp"

namespace fedpake {

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline double parse_double(std::string_view text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw Error("not a number: '" + std::string(text) + "'");
    return v;
}

inline void write_checkpoint(std::ostream& os, const ModelParams& model) {
    model.validate();
    os << "fedpake-checkpoint 1\n";
    os << "layers " << model.layers.size() << '\n';
    for (const auto& l : model.layers) {
        if (l.name.find_first_of(" \t\r\n") != std::string::npos)
            throw Error("layer name '" + l.name + "' contains whitespace");
        os << "layer " << l.name << ' ' << l.shape.size();
        for (auto d : l.shape) os << ' ' << d;
        os << '\n';
        for (double v : l.values) os << format_double(v) << '\n';
    }
}

namespace detail {

class LineReader {
public:
    explicit LineReader(std::istream& is) : is_(is) {}

    std::string next(const char* what) {
        std::string line;
        while (std::getline(is_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            return line;
        }
        throw Error("checkpoint: unexpected end of input while reading " + std::string(what));
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error("checkpoint line " + std::to_string(line_no_) + ": " + msg);
    }

private:
    std::istream& is_;
    std::size_t line_no_ = 0;
};

}  // namespace detail

inline ModelParams read_checkpoint(std::istream& is) {
    detail::LineReader in(is);
    if (in.next("header") != "fedpake-checkpoint 1") in.fail("bad header");

    std::istringstream count_line(in.next("layer count"));
    std::string kw;
    std::size_t count = 0;
    if (!(count_line >> kw >> count) || kw != "layers") in.fail("expected 'layers <count>'");

    ModelParams model;
    for (std::size_t i = 0; i < count; ++i) {
        std::istringstream head(in.next("layer header"));
        LayerTensor layer;
        std::size_t rank = 0;
        if (!(head >> kw >> layer.name >> rank) || kw != "layer") in.fail("expected 'layer <name> <rank> <dims...>'");
        layer.shape.resize(rank);
        for (auto& d : layer.shape)
            if (!(head >> d)) in.fail("layer '" + layer.name + "': missing dimension");
        const std::size_t n = layer.size();
        layer.values.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            const std::string text = in.next("layer values");
            try {
                layer.values.push_back(parse_double(text));
            } catch (const Error& e) {
                in.fail("layer '" + layer.name + "': " + e.what());
            }
        }
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

inline void save_checkpoint(const std::string& path, const ModelParams& model) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_checkpoint(os, model);
    if (!os) throw Error("write failed: '" + path + "'");
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_checkpoint(is);
}

}  // namespace fedpake
