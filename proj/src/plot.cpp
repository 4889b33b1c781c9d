#include "gh/plot.hpp"

#include <array>
#include <cstdio>
#include <string>

#include "gh/error.hpp"

namespace gh {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr double kSize = 480.0;
constexpr double kScale = 200.0;  // the unit circle fills most of the canvas

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double px(double x) { return kSize / 2 + kScale * x; }
double py(double y) { return kSize / 2 - kScale * y; }

}  // namespace

void write_embedding_svg(std::ostream& out, const Matrix& embeddings, std::span<const int> labels,
                         const GeometricStructure* structure) {
  if (embeddings.rows() != 2) {
    throw Error(Errc::unsupported, "plot export needs 2-D embeddings, got d=" + std::to_string(embeddings.rows()) +
                                         "; use embeddings_final.csv (CSV) directly instead");
  }
  if (labels.size() != embeddings.cols()) throw Error(Errc::dimension, "one label per embedding expected");
  if (structure && structure->dim() != 2) throw Error(Errc::unsupported, "plot export needs a 2-D structure");

  const std::string size = fmt(kSize);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
      << size << ' ' << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<circle cx=\"" << fmt(px(0)) << "\" cy=\"" << fmt(py(0)) << "\" r=\"" << fmt(kScale)
      << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
  if (structure) {
    for (std::size_t k = 0; k < structure->count(); ++k) {
      const Vector v = structure->vertex(k);
      out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(v[0])) << "\" y2=\""
          << fmt(py(v[1])) << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
    }
  }
  for (std::size_t i = 0; i < embeddings.cols(); ++i) {
    const int l = labels[i];
    const char* color = l >= 0 ? kPalette[static_cast<std::size_t>(l) % kPalette.size()] : "#000000";
    out << "<circle cx=\"" << fmt(px(embeddings(0, i))) << "\" cy=\"" << fmt(py(embeddings(1, i)))
        << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace gh
