#include "svrgld/error.hpp"
#include "svrgld/models.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace svrgld {
namespace {

constexpr char kMagic[8] = {'S', 'V', 'L', 'D', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kTextHeader = "svrgld-model";

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void matrix(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
  }
  void vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }

 private:
  void put(std::uint64_t v, int bytes) {
    std::array<char, 8> buf{};
    for (int b = 0; b < bytes; ++b) {
      buf[static_cast<std::size_t>(b)] = static_cast<char>((v >> (8 * b)) & 0xff);
    }
    os_.write(buf.data(), bytes);
  }
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
    }
    return m;
  }
  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }

 private:
  std::uint64_t get(int bytes) {
    std::array<unsigned char, 8> buf{};
    is_.read(reinterpret_cast<char*>(buf.data()), bytes);
    require(is_.gcount() == bytes, ErrorCode::Io, "truncated model file");
    std::uint64_t v = 0;
    for (int b = bytes - 1; b >= 0; --b) {
      v = (v << 8) | buf[static_cast<std::size_t>(b)];
    }
    return v;
  }
  std::istream& is_;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_matrix(std::ostream& os, const char* name, const Matrix& m) {
  os << name << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

void expect_token(std::istream& is, const std::string& want) {
  std::string got;
  is >> got;
  require(got == want, ErrorCode::Io,
          "model file: expected '" + want + "', found '" + got + "'");
}

double read_double(std::istream& is) {
  std::string tok;
  is >> tok;
  require(!tok.empty(), ErrorCode::Io, "model file: unexpected end of data");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  require(end && *end == '\0', ErrorCode::Io,
          "model file: bad number '" + tok + "'");
  return v;
}

Matrix read_text_matrix(std::istream& is, const char* name, Eigen::Index rows,
                        Eigen::Index cols) {
  expect_token(is, name);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_double(is);
  }
  return m;
}

std::uint64_t read_u64(std::istream& is, const char* key) {
  expect_token(is, key);
  std::uint64_t v = 0;
  is >> v;
  require(!is.fail(), ErrorCode::Io, std::string("model file: bad ") + key);
  return v;
}

void check_size(std::uint64_t d, std::uint64_t n) {
  require(d >= 1 && d <= (1u << 16) && n >= 1 && n <= (std::uint64_t{1} << 32),
          ErrorCode::Io, "model file: implausible dimensions");
}

}  // namespace

void save_model(const ObjectiveModel& model, const std::filesystem::path& path,
                ModelFormat format) {
  const auto* quad = dynamic_cast<const QuadraticAlternateModel*>(&model);
  const auto* logit = dynamic_cast<const LogisticModel*>(&model);
  require(quad || logit, ErrorCode::InvalidInput,
          "only the built-in models can be serialized");

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");

  const std::uint64_t d = model.dim();
  const std::uint64_t n = model.size();
  const std::uint64_t seed = quad ? quad->seed() : logit->seed();

  if (format == ModelFormat::Binary) {
    BinaryWriter w(os);
    os.write(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(model.kind()));
    w.u64(d);
    w.u64(n);
    w.u64(seed);
    if (quad) {
      w.matrix(quad->rotation());
      w.vector(quad->eigenvalues());
      w.matrix(quad->samples());
    } else {
      w.f64(logit->lambda());
      w.vector(logit->true_param());
      w.matrix(logit->features());
      w.vector(logit->labels());
    }
  } else {
    os << kTextHeader << ' ' << kVersion << '\n'
       << "kind " << to_string(model.kind()) << '\n'
       << "d " << d << '\n'
       << "n " << n << '\n'
       << "seed " << seed << '\n';
    if (quad) {
      write_text_matrix(os, "rotation", quad->rotation());
      write_text_matrix(os, "eigenvalues", quad->eigenvalues().transpose());
      write_text_matrix(os, "samples", quad->samples());
    } else {
      os << "lambda " << format_double(logit->lambda()) << '\n';
      write_text_matrix(os, "true_param", logit->true_param().transpose());
      write_text_matrix(os, "features", logit->features());
      write_text_matrix(os, "labels", logit->labels());
    }
  }
  os.flush();
  require(os.good(), ErrorCode::Io, "write failed for " + path.string());
}

std::unique_ptr<ObjectiveModel> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::Io, "cannot open " + path.string());

  char head[sizeof kMagic] = {};
  is.read(head, sizeof head);
  if (is.gcount() == sizeof head && std::memcmp(head, kMagic, sizeof head) == 0) {
    BinaryReader r(is);
    require(r.u32() == kVersion, ErrorCode::Io, "unsupported model file version");
    const std::uint32_t kind = r.u32();
    const std::uint64_t d = r.u64();
    const std::uint64_t n = r.u64();
    const std::uint64_t seed = r.u64();
    check_size(d, n);
    const auto di = static_cast<Eigen::Index>(d);
    const auto ni = static_cast<Eigen::Index>(n);
    if (kind == static_cast<std::uint32_t>(ModelKind::Quadratic)) {
      Matrix rotation = r.matrix(di, di);
      Vector eig = r.vector(di);
      Matrix samples = r.matrix(ni, di);
      return std::make_unique<QuadraticAlternateModel>(
          std::move(rotation), std::move(eig), std::move(samples), seed);
    }
    if (kind == static_cast<std::uint32_t>(ModelKind::Logistic)) {
      const double lambda = r.f64();
      Vector theta = r.vector(di);
      Matrix features = r.matrix(ni, di);
      Vector labels = r.vector(ni);
      return std::make_unique<LogisticModel>(std::move(features),
                                             std::move(labels), lambda,
                                             std::move(theta), seed);
    }
    fail(ErrorCode::Io, "unknown model kind in " + path.string());
  }

  is.clear();
  is.seekg(0);
  expect_token(is, kTextHeader);
  std::uint32_t version = 0;
  is >> version;
  require(version == kVersion, ErrorCode::Io, "unsupported model file version");
  expect_token(is, "kind");
  std::string kind;
  is >> kind;
  const std::uint64_t d = read_u64(is, "d");
  const std::uint64_t n = read_u64(is, "n");
  const std::uint64_t seed = read_u64(is, "seed");
  check_size(d, n);
  const auto di = static_cast<Eigen::Index>(d);
  const auto ni = static_cast<Eigen::Index>(n);
  if (kind == "quadratic") {
    Matrix rotation = read_text_matrix(is, "rotation", di, di);
    Vector eig = read_text_matrix(is, "eigenvalues", 1, di).transpose();
    Matrix samples = read_text_matrix(is, "samples", ni, di);
    return std::make_unique<QuadraticAlternateModel>(
        std::move(rotation), std::move(eig), std::move(samples), seed);
  }
  if (kind == "logistic") {
    expect_token(is, "lambda");
    const double lambda = read_double(is);
    Vector theta = read_text_matrix(is, "true_param", 1, di).transpose();
    Matrix features = read_text_matrix(is, "features", ni, di);
    Vector labels = read_text_matrix(is, "labels", ni, 1);
    return std::make_unique<LogisticModel>(std::move(features),
                                           std::move(labels), lambda,
                                           std::move(theta), seed);
  }
  fail(ErrorCode::Io, "unknown model kind '" + kind + "'");
}

}  // namespace svrgld
