#include "scn/ingest/csv.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace scn::csv {
namespace {

std::vector<Row> read_all(const std::string& text) {
  std::istringstream in(text);
  Reader reader(in);
  std::vector<Row> rows;
  while (auto row = reader.next()) rows.push_back(*row);
  return rows;
}

TEST(Csv, PlainAndQuotedFields) {
  auto rows = read_all("a,b,c\n\"x,y\",\"say \"\"hi\"\"\",\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (Row{"a", "b", "c"}));
  EXPECT_EQ(rows[1], (Row{"x,y", "say \"hi\"", ""}));
}

TEST(Csv, EmbeddedNewlineAndCrlf) {
  std::istringstream in("\"two\nlines\",z\r\nnext,row\r\n");
  Reader reader(in);
  auto first = reader.next();
  ASSERT_TRUE(first);
  EXPECT_EQ(*first, (Row{"two\nlines", "z"}));
  EXPECT_EQ(reader.line(), 1u);
  auto second = reader.next();
  ASSERT_TRUE(second);
  EXPECT_EQ(*second, (Row{"next", "row"}));
  EXPECT_EQ(reader.line(), 3u);
  EXPECT_FALSE(reader.next());
}

TEST(Csv, LastLineWithoutNewline) {
  auto rows = read_all("a,b\nc,d");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (Row{"c", "d"}));
}

TEST(Csv, UnterminatedQuoteThrows) {
  EXPECT_THROW(read_all("a,\"open\n"), std::runtime_error);
}

TEST(Csv, WriteThenReadIsIdentity) {
  Row row = {"plain", "comma,inside", "quote\"inside", "new\nline", ""};
  std::ostringstream out;
  write_row(out, row);
  auto rows = read_all(out.str());
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], row);
  EXPECT_EQ(escape("plain"), "plain");
  EXPECT_EQ(escape("a,b"), "\"a,b\"");
}

}  // namespace
}  // namespace scn::csv
