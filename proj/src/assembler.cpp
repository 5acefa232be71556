#include "flagstall/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace flagstall {

namespace {

struct Stmt {
  std::string text;
  int line;
};

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw SimError(Err::ParseError, "line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::vector<Stmt> split_statements(const std::string& source) {
  std::vector<Stmt> stmts;
  int line = 1;
  std::string cur;
  auto flush = [&](int at) {
    std::string t = trim(cur);
    if (!t.empty()) stmts.push_back({t, at});
    cur.clear();
  };
  for (char c : source) {
    if (c == '\n') {
      flush(line);
      ++line;
    } else if (c == ';') {
      flush(line);
    } else {
      cur += c;
    }
  }
  flush(line);
  // strip comments
  std::vector<Stmt> out;
  for (auto& s : stmts) {
    size_t h = s.text.find('#');
    std::string t = trim(h == std::string::npos ? s.text : s.text.substr(0, h));
    if (!t.empty()) out.push_back({t, s.line});
  }
  return out;
}

uint64_t parse_count(const std::string& tok, int line) {
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(tok, &used, 10);
    if (used != tok.size()) parse_fail(line, "bad repeat count '" + tok + "'");
    return v;
  } catch (const SimError&) {
    throw;
  } catch (...) {
    parse_fail(line, "bad repeat count '" + tok + "'");
  }
}

// Expand .rept/.endr blocks (multi-line and single-statement forms).
std::vector<Stmt> expand_rept(const std::vector<Stmt>& in, size_t& i, int depth);

std::vector<Stmt> expand_all(const std::vector<Stmt>& in, int depth) {
  std::vector<Stmt> out;
  for (size_t i = 0; i < in.size();) {
    auto w = words(in[i].text);
    std::string head = upper(w[0]);
    if (head == ".REPT") {
      auto block = expand_rept(in, i, depth);
      out.insert(out.end(), block.begin(), block.end());
    } else if (head == ".ENDR") {
      parse_fail(in[i].line, ".endr without matching .rept");
    } else {
      out.push_back(in[i]);
      ++i;
    }
  }
  return out;
}

std::vector<Stmt> expand_rept(const std::vector<Stmt>& in, size_t& i, int depth) {
  if (depth > 16) parse_fail(in[i].line, ".rept nesting too deep");
  auto w = words(in[i].text);
  if (w.size() < 2) parse_fail(in[i].line, ".rept needs a count");
  uint64_t count = parse_count(w[1], in[i].line);
  if (count > 1'000'000) parse_fail(in[i].line, "repeat count too large");

  std::vector<Stmt> body;
  if (w.size() > 2) {
    // inline form: .rept N <stmt...> .endr
    if (upper(w.back()) != ".ENDR") parse_fail(in[i].line, "inline .rept must end with .endr");
    std::string b;
    for (size_t k = 2; k + 1 < w.size(); ++k) {
      if (!b.empty()) b += ' ';
      b += w[k];
    }
    if (!b.empty()) body.push_back({b, in[i].line});
    ++i;
  } else {
    size_t j = i + 1;
    int nest = 1;
    for (; j < in.size(); ++j) {
      std::string h = upper(words(in[j].text)[0]);
      if (h == ".REPT") ++nest;
      if (h == ".ENDR" && --nest == 0) break;
      body.push_back(in[j]);
    }
    if (j == in.size()) parse_fail(in[i].line, ".rept without .endr");
    i = j + 1;
    body = expand_all(body, depth + 1);
  }

  std::vector<Stmt> out;
  out.reserve(body.size() * count);
  for (uint64_t r = 0; r < count; ++r) out.insert(out.end(), body.begin(), body.end());
  return out;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

std::optional<uint8_t> parse_register(const std::string& tok) {
  if (tok.size() < 2 || (tok[0] != 'r' && tok[0] != 'R')) return std::nullopt;
  int v = 0;
  for (size_t i = 1; i < tok.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return std::nullopt;
    v = v * 10 + (tok[i] - '0');
    if (v >= 100) return std::nullopt;
  }
  if (v >= kNumRegs) return std::nullopt;
  return static_cast<uint8_t>(v);
}

uint64_t parse_integer(const std::string& tok, int line) {
  bool neg = !tok.empty() && tok[0] == '-';
  std::string body = neg ? tok.substr(1) : tok;
  int base = 10;
  if (body.size() > 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
    base = 16;
    body = body.substr(2);
  }
  if (body.empty()) parse_fail(line, "bad integer '" + tok + "'");
  uint64_t v = 0;
  try {
    size_t used = 0;
    v = std::stoull(body, &used, base);
    if (used != body.size()) parse_fail(line, "bad integer '" + tok + "'");
  } catch (const SimError&) {
    throw;
  } catch (...) {
    parse_fail(line, "bad integer '" + tok + "'");
  }
  return neg ? ~v + 1 : v;
}

Operand parse_operand(std::string tok, int line) {
  tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }),
            tok.end());
  if (tok.empty()) parse_fail(line, "empty operand");
  if (tok.front() == '[') {
    if (tok.back() != ']') parse_fail(line, "unterminated memory operand '" + tok + "'");
    std::string inner = tok.substr(1, tok.size() - 2);
    size_t split = inner.find_first_of("+-", 1);
    std::string base = split == std::string::npos ? inner : inner.substr(0, split);
    auto reg = parse_register(base);
    if (!reg) parse_fail(line, "memory operand needs a base register: '" + tok + "'");
    int64_t disp = 0;
    if (split != std::string::npos) {
      std::string d = inner.substr(split); // includes sign
      bool neg = d[0] == '-';
      uint64_t mag = parse_integer(d.substr(1), line);
      disp = neg ? -static_cast<int64_t>(mag) : static_cast<int64_t>(mag);
    }
    return Operand::make_mem(*reg, disp);
  }
  if (auto reg = parse_register(tok)) return Operand::make_reg(*reg);
  if (tok[0] == '-' || std::isdigit(static_cast<unsigned char>(tok[0])))
    return Operand::make_imm(parse_integer(tok, line));
  parse_fail(line, "bad operand '" + tok + "'");
}

std::optional<Opcode> mnemonic(const std::string& up) {
  static const std::map<std::string, Opcode> table = {
      {"MOV", Opcode::Mov},       {"SUB", Opcode::Sub},     {"CMP", Opcode::Cmp},
      {"CMPXCHG", Opcode::Cmpxchg}, {"JZ", Opcode::Jz},     {"JE", Opcode::Je},
      {"JMP", Opcode::Jmp},       {"NOP", Opcode::Nop},     {"LAHF", Opcode::Lahf},
      {"SAHF", Opcode::Sahf},     {"PUSHF", Opcode::Pushf}, {"POPF", Opcode::Popf},
      {"RDTSC", Opcode::Rdtsc},   {"XBEGIN", Opcode::Xbegin}, {"XEND", Opcode::Xend},
      {"HALT", Opcode::Halt},
  };
  auto it = table.find(up);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> split_operands(const std::string& rest, int line) {
  std::vector<std::string> out;
  std::string cur;
  int bracket = 0;
  for (char c : rest) {
    if (c == '[') ++bracket;
    if (c == ']') --bracket;
    if (c == ',' && bracket == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  for (auto& o : out)
    if (o.empty()) parse_fail(line, "empty operand");
  return out;
}

void check_shape(const Instruction& ins, int line) {
  auto kind = [](const Operand& o) { return o.kind; };
  int mems = (kind(ins.a) == OperandKind::Mem) + (kind(ins.b) == OperandKind::Mem);
  switch (ins.op) {
    case Opcode::Mov:
      if (kind(ins.a) != OperandKind::Reg && kind(ins.a) != OperandKind::Mem)
        parse_fail(line, "MOV destination must be a register or memory");
      if (kind(ins.b) == OperandKind::None) parse_fail(line, "MOV needs a source");
      if (mems > 1) parse_fail(line, "MOV cannot have two memory operands");
      break;
    case Opcode::Sub:
      if (kind(ins.a) != OperandKind::Reg) parse_fail(line, "SUB destination must be a register");
      if (kind(ins.b) == OperandKind::None) parse_fail(line, "SUB needs a source");
      break;
    case Opcode::Cmp:
      if (kind(ins.a) == OperandKind::None || kind(ins.b) == OperandKind::None)
        parse_fail(line, "CMP needs two operands");
      if (mems > 1) parse_fail(line, "CMP cannot have two memory operands");
      break;
    case Opcode::Cmpxchg:
      if (kind(ins.a) != OperandKind::Mem || kind(ins.b) != OperandKind::Reg)
        parse_fail(line, "CMPXCHG needs a memory destination and register source");
      break;
    case Opcode::Rdtsc:
      if (kind(ins.a) != OperandKind::Reg) parse_fail(line, "RDTSC needs a destination register");
      break;
    default: break;
  }
}

} // namespace

Program assemble(const std::string& source) {
  auto stmts = expand_all(split_statements(source), 0);

  Program prog;
  std::vector<int> lines; // per-instruction source line, for label diagnostics
  for (auto& st : stmts) {
    std::string text = st.text;
    // label prefixes
    while (true) {
      size_t colon = text.find(':');
      if (colon == std::string::npos) break;
      std::string head = trim(text.substr(0, colon));
      if (!is_identifier(head)) break;
      Instruction lab;
      lab.op = Opcode::Label;
      lab.label = head;
      prog.code.push_back(lab);
      lines.push_back(st.line);
      text = trim(text.substr(colon + 1));
      if (text.empty()) break;
    }
    if (text.empty()) continue;

    size_t sp = text.find_first_of(" \t");
    std::string op_tok = sp == std::string::npos ? text : text.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : trim(text.substr(sp + 1));
    auto op = mnemonic(upper(op_tok));
    if (!op) parse_fail(st.line, "unknown mnemonic '" + op_tok + "'");

    Instruction ins;
    ins.op = *op;
    if (is_jump(*op) || *op == Opcode::Xbegin) {
      if (!is_identifier(rest))
        parse_fail(st.line, std::string(opcode_name(*op)) + " needs a label operand");
      ins.label = rest;
    } else {
      auto ops = split_operands(rest, st.line);
      size_t expect = 0;
      switch (*op) {
        case Opcode::Mov:
        case Opcode::Sub:
        case Opcode::Cmp:
        case Opcode::Cmpxchg: expect = 2; break;
        case Opcode::Rdtsc: expect = 1; break;
        default: expect = 0; break;
      }
      if (ops.size() != expect)
        parse_fail(st.line, std::string(opcode_name(*op)) + " takes " + std::to_string(expect) +
                                " operand(s), got " + std::to_string(ops.size()));
      if (expect >= 1) ins.a = parse_operand(ops[0], st.line);
      if (expect >= 2) ins.b = parse_operand(ops[1], st.line);
      check_shape(ins, st.line);
    }
    prog.code.push_back(ins);
    lines.push_back(st.line);
  }

  // label table + target resolution
  for (uint32_t i = 0; i < prog.code.size(); ++i) {
    if (prog.code[i].op != Opcode::Label) continue;
    auto [it, fresh] = prog.labels.emplace(prog.code[i].label, i);
    if (!fresh)
      throw SimError(Err::DuplicateLabel, "line " + std::to_string(lines[i]) + ": duplicate label '" +
                                              prog.code[i].label + "'");
  }
  for (uint32_t i = 0; i < prog.code.size(); ++i) {
    auto& ins = prog.code[i];
    if (!is_jump(ins.op) && ins.op != Opcode::Xbegin) continue;
    auto it = prog.labels.find(ins.label);
    if (it == prog.labels.end())
      throw SimError(Err::UndefinedLabel, "line " + std::to_string(lines[i]) + ": undefined label '" +
                                              ins.label + "'");
    ins.target = static_cast<int32_t>(it->second);
  }
  return prog;
}

namespace {

std::string format_imm(uint64_t v) {
  if (v < 4096) return std::to_string(v);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_operand(const Operand& op) {
  switch (op.kind) {
    case OperandKind::Reg: return "r" + std::to_string(op.reg);
    case OperandKind::Imm: return format_imm(op.imm);
    case OperandKind::Mem: {
      std::string s = "[r" + std::to_string(op.reg);
      if (op.disp > 0) s += "+" + std::to_string(op.disp);
      if (op.disp < 0) s += "-" + std::to_string(-op.disp);
      return s + "]";
    }
    case OperandKind::None: break;
  }
  return "?";
}

} // namespace

std::string disassemble(const Program& prog) {
  std::string out;
  for (const auto& ins : prog.code) {
    if (ins.op == Opcode::Label) {
      out += ins.label + ":\n";
      continue;
    }
    out += opcode_name(ins.op);
    if (is_jump(ins.op) || ins.op == Opcode::Xbegin) {
      out += " " + ins.label;
    } else {
      if (ins.a.kind != OperandKind::None) out += " " + format_operand(ins.a);
      if (ins.b.kind != OperandKind::None) out += ", " + format_operand(ins.b);
    }
    out += "\n";
  }
  return out;
}

} // namespace flagstall
