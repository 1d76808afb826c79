#include "isclab/trace.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <string>

#include "isclab/errors.hpp"

namespace isclab {

namespace {

void append_u64(std::string& s, std::uint64_t v) {
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, p);
}

struct FieldCursor {
  const std::string& line;
  std::size_t line_no;
  std::size_t pos = 0;

  // Returns the next comma-separated field and its 1-based start column.
  std::pair<std::string_view, std::size_t> next(const char* name) {
    if (pos > line.size())
      throw ParseError(std::string("missing field '") + name + "'", line_no, line.size() + 1);
    std::size_t start = pos;
    std::size_t comma = line.find(',', start);
    std::size_t end = comma == std::string::npos ? line.size() : comma;
    pos = comma == std::string::npos ? line.size() + 1 : comma + 1;
    return {std::string_view(line).substr(start, end - start), start + 1};
  }

  void expect_consumed() const {
    if (pos <= line.size())
      throw ParseError("unexpected trailing field", line_no, pos + 1);
  }
};

std::int64_t parse_int(std::string_view field, std::size_t line_no, std::size_t column,
                       const char* name) {
  std::int64_t value = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || p != field.data() + field.size())
    throw ParseError(std::string("invalid number in field '") + name + "'", line_no, column);
  return value;
}

std::uint64_t parse_nonneg(std::string_view field, std::size_t line_no, std::size_t column,
                           const char* name) {
  std::int64_t value = parse_int(field, line_no, column, name);
  if (value < 0)
    throw ValidationError(std::string("field '") + name + "' must be >= 0 at line " +
                          std::to_string(line_no));
  return static_cast<std::uint64_t>(value);
}

}  // namespace

void validate_trace(std::span<const InterfaceEvent> events) {
  bool have_prev = false;
  std::uint64_t prev_seq = 0;
  std::uint64_t prev_cycle = 0;
  for (const InterfaceEvent& e : events) {
    if (have_prev) {
      if (e.seq_no <= prev_seq)
        throw ValidationError("seq_no not strictly increasing at event " +
                              std::to_string(e.seq_no));
      if (e.cycle < prev_cycle)
        throw ValidationError("cycle decreases at event " + std::to_string(e.seq_no));
    }
    prev_seq = e.seq_no;
    prev_cycle = e.cycle;
    have_prev = true;
  }
}

std::size_t write_trace(std::span<const InterfaceEvent> events, std::ostream& out) {
  validate_trace(events);

  std::string buf;
  buf.reserve(64);
  std::size_t written = 0;

  auto flush_line = [&] {
    buf.push_back('\n');
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("trace sink write failed", written);
    written += buf.size();
    buf.clear();
  };

  buf = kTraceHeader;
  flush_line();

  for (const InterfaceEvent& e : events) {
    append_u64(buf, e.seq_no);
    buf.push_back(',');
    append_u64(buf, e.cycle);
    buf.push_back(',');
    append_u64(buf, e.enclave_id);
    buf.push_back(',');
    buf.push_back(e.direction == Direction::Ecall ? 'E' : 'O');
    buf.push_back(',');
    append_u64(buf, e.call_id);
    buf.push_back(',');
    append_u64(buf, e.param_bytes);
    buf.push_back(',');
    if (e.aux)
      append_u64(buf, *e.aux);
    else
      buf.push_back('-');
    flush_line();
  }
  return written;
}

Trace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace stream", 1, 1);
  if (line != kTraceHeader)
    throw ParseError("bad trace header (expected '" + std::string(kTraceHeader) + "')", 1, 1);

  Trace events;
  std::size_t line_no = 1;
  bool have_prev = false;
  std::uint64_t prev_seq = 0;
  std::uint64_t prev_cycle = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError("blank line inside trace", line_no, 1);
    }

    FieldCursor cur{line, line_no};
    InterfaceEvent e;

    auto [seq_f, seq_c] = cur.next("seq");
    e.seq_no = parse_nonneg(seq_f, line_no, seq_c, "seq");
    auto [cyc_f, cyc_c] = cur.next("cycle");
    e.cycle = parse_nonneg(cyc_f, line_no, cyc_c, "cycle");
    auto [enc_f, enc_c] = cur.next("enclave_id");
    e.enclave_id = static_cast<std::uint32_t>(parse_nonneg(enc_f, line_no, enc_c, "enclave_id"));

    auto [dir_f, dir_c] = cur.next("dir");
    if (dir_f == "E")
      e.direction = Direction::Ecall;
    else if (dir_f == "O")
      e.direction = Direction::Ocall;
    else
      throw ParseError("dir must be 'E' or 'O'", line_no, dir_c);

    auto [call_f, call_c] = cur.next("call_id");
    e.call_id = static_cast<std::uint32_t>(parse_nonneg(call_f, line_no, call_c, "call_id"));
    auto [param_f, param_c] = cur.next("param_bytes");
    e.param_bytes = parse_nonneg(param_f, line_no, param_c, "param_bytes");

    auto [aux_f, aux_c] = cur.next("aux");
    if (aux_f != "-")
      e.aux = static_cast<std::uint32_t>(parse_nonneg(aux_f, line_no, aux_c, "aux"));
    cur.expect_consumed();

    if (have_prev) {
      if (e.seq_no <= prev_seq)
        throw ValidationError("seq_no not strictly increasing at line " + std::to_string(line_no));
      if (e.cycle < prev_cycle)
        throw ValidationError("cycle decreases at line " + std::to_string(line_no));
    }
    prev_seq = e.seq_no;
    prev_cycle = e.cycle;
    have_prev = true;

    events.push_back(std::move(e));
  }
  return events;
}

std::uint64_t delay_of(const InterfaceEvent& ecall, const InterfaceEvent& ocall) {
  if (ocall.seq_no < ecall.seq_no)
    throw ContractError("ocall precedes ecall in trace order");
  if (ocall.cycle < ecall.cycle)
    throw ContractError("ocall cycle precedes ecall cycle");
  return ocall.cycle - ecall.cycle;
}

}  // namespace isclab
