#include "scn/ingest/csv.hpp"

#include <stdexcept>

namespace scn::csv {

std::optional<Row> Reader::next() {
  int c = is_.get();
  if (c == EOF) return std::nullopt;
  record_line_ = line_;
  Row row;
  std::string field;
  bool quoted = false;
  bool field_started_quoted = false;
  for (;; c = is_.get()) {
    if (quoted) {
      if (c == EOF) {
        throw std::runtime_error("unterminated quoted field starting on line " +
                                 std::to_string(record_line_));
      }
      if (c == '"') {
        if (is_.peek() == '"') {
          is_.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_started_quoted) {
      quoted = true;
      field_started_quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started_quoted = false;
    } else if (c == '\r' && is_.peek() == '\n') {
      continue;
    } else if (c == '\n' || c == EOF) {
      if (c == '\n') ++line_;
      row.push_back(std::move(field));
      return row;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& os, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << escape(row[i]);
  }
  os << '\n';
}

void write_comments(std::ostream& os, std::string_view text) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    os << "# " << text.substr(start, end - start) << '\n';
    start = end + 1;
  }
}

std::size_t skip_comments(std::istream& is) {
  std::string line;
  std::size_t n = 0;
  while (is.peek() == '#') {
    std::getline(is, line);
    ++n;
  }
  return n;
}

}  // namespace scn::csv
