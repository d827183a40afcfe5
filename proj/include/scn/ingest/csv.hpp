#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace scn::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader: comma separated, double-quoted fields may hold commas,
/// quotes ("") and line breaks. Accepts LF or CRLF line endings.
class Reader {
 public:
  explicit Reader(std::istream& is, std::size_t first_line = 1) : is_(is), line_(first_line) {}

  /// Next record, or nullopt at end of input. Throws on an unterminated quote.
  std::optional<Row> next();
  /// Physical line on which the last returned record started (1-based).
  std::size_t line() const { return record_line_; }

 private:
  std::istream& is_;
  std::size_t line_;
  std::size_t record_line_ = 0;
};

/// Quotes a field only when it needs quoting.
std::string escape(std::string_view field);
void write_row(std::ostream& os, const Row& row);

/// Writes each line of `text` prefixed with "# ".
void write_comments(std::ostream& os, std::string_view text);
/// Consumes leading lines that start with '#' and returns how many.
std::size_t skip_comments(std::istream& is);

}  // namespace scn::csv
