#include "rode/params.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rode/errors.hpp"

namespace rode {

namespace {

constexpr const char* kCheckpointHeader = "R-ODE-CKPT v1";

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

std::string encode_base64(std::span<const double> values) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  const int n = static_cast<int>(values.size_bytes());
  std::string out(4 * ((n + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes, n);
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<double> decode_base64(const std::string& text, std::size_t expected, const std::string& source,
                                  std::size_t line) {
  if (text.size() % 4 != 0) throw ParseError(source, line, "base64 payload has invalid length");
  std::vector<unsigned char> bytes(3 * text.size() / 4 + 1);
  const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError(source, line, "invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t padding = 0;
  for (auto it = text.rbegin(); it != text.rend() && *it == '='; ++it) ++padding;
  const std::size_t length = static_cast<std::size_t>(n) - padding;
  if (length != expected * sizeof(double)) throw ParseError(source, line, "payload size does not match shape");
  std::vector<double> values(expected);
  std::memcpy(values.data(), bytes.data(), length);
  return values;
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor value) {
  RODE_REQUIRE(!name.empty(), "parameter names must be non-empty");
  const bool inserted = params_.emplace(name, std::move(value)).second;
  RODE_REQUIRE(inserted, "duplicate parameter name: " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  RODE_REQUIRE(it != params_.end(), "unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  RODE_REQUIRE(it != params_.end(), "unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

std::map<std::string, ad::Var> ParamStore::bind(bool requires_grad) const {
  std::map<std::string, ad::Var> out;
  for (const auto& [name, value] : params_)
    out.emplace(name, requires_grad ? ad::parameter(name, value) : ad::constant(value));
  return out;
}

void Adam::step(ParamStore& params, const GradientMap& grads, double lr) {
  for (const auto& [name, g] : grads) {
    RODE_REQUIRE(params.contains(name), "gradient for unknown parameter: " + name);
    RODE_REQUIRE(params.at(name).same_shape(g), "gradient shape mismatch for " + name);
  }
  params.advance_step();
  const double t = static_cast<double>(params.step());
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (const auto& [name, value] : params) {
    Tensor& p = params.at(name);
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) it->second = {Tensor(p.rows(), p.cols()), Tensor(p.rows(), p.cols())};
    Moments& m = it->second;
    auto g_it = grads.find(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = g_it == grads.end() ? 0.0 : g_it->second[i];
      m.first[i] = options_.beta1 * m.first[i] + (1.0 - options_.beta1) * g;
      m.second[i] = options_.beta2 * m.second[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m.first[i] / c1;
      const double vhat = m.second[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

void write_checkpoint(std::ostream& out, const ParamStore& params) {
  out << kCheckpointHeader << '\n';
  for (const auto& [name, t] : params)
    out << name << '\t' << t.rows() << ',' << t.cols() << '\t' << encode_base64(t.data()) << '\n';
}

ParamStore read_checkpoint(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader)
    throw ParseError(source, 1, "missing checkpoint header");
  ParamStore params;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw ParseError(source, lineno, "expected name<TAB>shape<TAB>payload");
    const std::string name = line.substr(0, tab1);
    const std::string shape = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::size_t rows = 0, cols = 0;
    char comma = 0;
    std::istringstream ss(shape);
    if (!(ss >> rows >> comma >> cols) || comma != ',' || !ss.eof())
      throw ParseError(source, lineno, "bad shape '" + shape + "'");
    auto values = decode_base64(line.substr(tab2 + 1), rows * cols, source, lineno);
    if (params.contains(name)) throw ParseError(source, lineno, "duplicate parameter " + name);
    params.add(name, Tensor(rows, cols, std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  write_checkpoint(out, params);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace rode
