#include "scn/ingest/transactions.hpp"

#include "scn/ingest/csv.hpp"
#include "scn/numerics/atomic_file.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace scn {

namespace {

const csv::Row kHeader = {"consumer_id", "date", "expense", "type",
                          "category",    "description", "payee"};

std::string format_expense(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace

DatasetCounts count_dataset(const std::vector<TransactionRecord>& records) {
  std::set<std::string_view> consumers, companies;
  for (const auto& r : records) {
    consumers.insert(r.consumer_id);
    companies.insert(r.payee);
  }
  return {records.size(), consumers.size(), companies.size()};
}

std::string format_date(const std::chrono::year_month_day& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::chrono::year_month_day parse_date(std::string_view text) {
  auto bad = [&] { return DataError("malformed date '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::size_t pos, std::size_t len, auto& out) {
    auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (res.ec != std::errc() || res.ptr != text.data() + pos + len) throw bad();
  };
  parse(0, 4, y);
  parse(5, 2, m);
  parse(8, 2, d);
  std::chrono::year_month_day date{std::chrono::year(y), std::chrono::month(m),
                                   std::chrono::day(d)};
  if (!date.ok()) throw bad();
  return date;
}

TransactionLog read_transactions(std::istream& in, const Taxonomy& taxonomy,
                                 const std::string& source) {
  const std::size_t skipped = csv::skip_comments(in);
  csv::Reader reader(in, skipped + 1);
  TransactionLog log;
  auto header = reader.next();
  if (!header) return log;
  if (*header != kHeader) {
    throw DataError(source + ": expected header consumer_id,date,expense,type,category,"
                             "description,payee");
  }
  while (auto row = reader.next()) {
    const std::string where = source + ":" + std::to_string(reader.line());
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() != kHeader.size()) {
      throw DataError(where + ": expected 7 fields, got " + std::to_string(row->size()));
    }
    TransactionRecord rec;
    rec.consumer_id = (*row)[0];
    if (rec.consumer_id.empty()) throw DataError(where + ": empty consumer id");
    try {
      rec.date = parse_date((*row)[1]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    const std::string& amount = (*row)[2];
    auto res = std::from_chars(amount.data(), amount.data() + amount.size(), rec.expense);
    if (res.ec != std::errc() || res.ptr != amount.data() + amount.size() ||
        !std::isfinite(rec.expense)) {
      throw DataError(where + ": malformed expense '" + amount + "'");
    }
    if (rec.expense <= 0.0) {
      throw DataError(where + ": non-positive expense " + amount);
    }
    const std::string& type = (*row)[3];
    if (type == "debit") {
      rec.payment_type = PaymentType::Debit;
    } else if (type == "credit") {
      rec.payment_type = PaymentType::Credit;
    } else {
      throw DataError(where + ": unknown payment type '" + type + "'");
    }
    rec.category = (*row)[4];
    if (!taxonomy.contains(rec.category)) {
      throw DataError(where + ": unknown category '" + rec.category + "'");
    }
    rec.description = (*row)[5];
    rec.payee = (*row)[6];
    if (rec.payee.empty()) throw DataError(where + ": empty payee");
    log.records.push_back(std::move(rec));
  }
  log.counts = count_dataset(log.records);
  return log;
}

TransactionLog load_transactions(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open transactions file " + path.string());
  return read_transactions(in, taxonomy, path.string());
}

void write_transactions(std::ostream& out, const std::vector<TransactionRecord>& records,
                        std::string_view provenance) {
  csv::write_comments(out, provenance);
  csv::write_row(out, kHeader);
  for (const auto& r : records) {
    csv::write_row(out, {r.consumer_id, format_date(r.date), format_expense(r.expense),
                         r.payment_type == PaymentType::Credit ? "credit" : "debit", r.category,
                         r.description, r.payee});
  }
}

void save_transactions(const std::filesystem::path& path,
                       const std::vector<TransactionRecord>& records,
                       std::string_view provenance) {
  write_atomically(path, [&](std::ostream& os) { write_transactions(os, records, provenance); },
                   true);
}

}  // namespace scn
