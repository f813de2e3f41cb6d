#include "distsi/wire.hpp"

#include <charconv>
#include <sstream>

namespace distsi {

const char* msg_kind_name(MsgKind kind) {
  switch (kind) {
    case MsgKind::SelectedSet: return "SelectedSet";
    case MsgKind::ModelBroadcast: return "ModelBroadcast";
    case MsgKind::LocalSummary: return "LocalSummary";
    case MsgKind::MleBroadcast: return "MleBroadcast";
    case MsgKind::ResidualCompensation: return "ResidualCompensation";
  }
  return "?";
}

namespace {

void put_double(std::string& out, double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

void put_int_list(std::string& out, const char* name, const IndexList& v) {
  out += "ints ";
  out += name;
  out += ' ';
  out += std::to_string(v.size());
  for (int x : v) {
    out += ' ';
    out += std::to_string(x);
  }
  out += '\n';
}

void put_vector(std::string& out, const char* name, const Vector& v) {
  out += "vec ";
  out += name;
  out += ' ';
  out += std::to_string(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out += ' ';
    put_double(out, v(i));
  }
  out += '\n';
}

void put_symmat(std::string& out, const char* name, const Matrix& m) {
  out += "symmat ";
  out += name;
  out += ' ';
  out += std::to_string(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      out += ' ';
      put_double(out, m(i, j));
    }
  out += '\n';
}

void put_num(std::string& out, const char* name, double v) {
  out += "num ";
  out += name;
  out += ' ';
  put_double(out, v);
  out += '\n';
}

void put_int(std::string& out, const char* name, long v) {
  out += "int ";
  out += name;
  out += ' ';
  out += std::to_string(v);
  out += '\n';
}

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view text) : in_(std::string(text)) {}

  IndexList int_list(const char* name) {
    expect("ints", name);
    long len = read_long();
    IndexList out(len);
    for (long i = 0; i < len; ++i) out[i] = static_cast<int>(read_long());
    return out;
  }

  Vector vector(const char* name) {
    expect("vec", name);
    long len = read_long();
    Vector out(len);
    for (long i = 0; i < len; ++i) out(i) = read_double();
    return out;
  }

  Matrix symmat(const char* name) {
    expect("symmat", name);
    long d = read_long();
    Matrix out(d, d);
    for (long i = 0; i < d; ++i)
      for (long j = 0; j <= i; ++j) {
        double v = read_double();
        out(i, j) = v;
        out(j, i) = v;
      }
    return out;
  }

  double num(const char* name) {
    expect("num", name);
    return read_double();
  }

  long integer(const char* name) {
    expect("int", name);
    return read_long();
  }

  void finish() {
    std::string extra;
    if (in_ >> extra) throw ProtocolError("trailing payload content");
  }

 private:
  void expect(const char* tag, const char* name) {
    std::string t, n;
    if (!(in_ >> t >> n) || t != tag || n != name)
      throw ProtocolError(std::string("malformed payload: expected ") + tag +
                          " " + name);
  }
  long read_long() {
    long v;
    if (!(in_ >> v)) throw ProtocolError("malformed payload: integer expected");
    return v;
  }
  double read_double() {
    std::string tok;
    if (!(in_ >> tok)) throw ProtocolError("malformed payload: number expected");
    double v;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw ProtocolError("malformed payload: bad number '" + tok + "'");
    return v;
  }

  std::istringstream in_;
};

std::string encode_body(const WireMessage& msg) {
  std::string payload;
  switch (msg.kind) {
    case MsgKind::SelectedSet: {
      const auto& b = std::get<SelectedSetBody>(msg.body);
      put_int_list(payload, "indices", b.indices);
      put_vector(payload, "values", b.values);
      break;
    }
    case MsgKind::ModelBroadcast: {
      const auto& b = std::get<ModelBroadcastBody>(msg.body);
      put_int_list(payload, "E", b.E);
      put_int_list(payload, "support", b.support);
      put_int(payload, "general", b.general_rule ? 1 : 0);
      break;
    }
    case MsgKind::LocalSummary: {
      const auto& b = std::get<LocalSummaryBody>(msg.body);
      put_vector(payload, "beta_E", b.beta_E);
      put_symmat(payload, "info", b.info);
      put_vector(payload, "gamma", b.gamma);
      put_num(payload, "yty", b.yty);
      put_int(payload, "n_k", b.n_k);
      break;
    }
    case MsgKind::MleBroadcast: {
      const auto& b = std::get<MleBroadcastBody>(msg.body);
      put_vector(payload, "beta_E", b.beta_E);
      break;
    }
    case MsgKind::ResidualCompensation: {
      const auto& b = std::get<ResidualCompensationBody>(msg.body);
      put_vector(payload, "values", b.values);
      break;
    }
  }
  return payload;
}

}  // namespace

std::string encode(const WireMessage& msg) {
  std::string payload = encode_body(msg);
  std::string out = "DSI1 ";
  out += msg_kind_name(msg.kind);
  out += ' ';
  out += std::to_string(msg.node_id);
  out += ' ';
  out += std::to_string(payload.size());
  out += '\n';
  out += payload;
  out += '\n';
  return out;
}

WireMessage decode(std::string_view frame) {
  auto eol = frame.find('\n');
  if (eol == std::string_view::npos)
    throw ProtocolError("truncated frame: missing header line");
  std::istringstream head{std::string(frame.substr(0, eol))};
  std::string magic, kind_name;
  int node_id;
  std::size_t payload_len;
  if (!(head >> magic >> kind_name >> node_id >> payload_len))
    throw ProtocolError("malformed frame header");
  if (magic != "DSI1") {
    if (magic.rfind("DSI", 0) == 0)
      throw ProtocolError("unsupported schema version '" + magic + "'");
    throw ProtocolError("not a DSI frame");
  }
  std::string_view rest = frame.substr(eol + 1);
  if (rest.size() < payload_len + 1)
    throw ProtocolError("truncated frame: payload shorter than declared");
  if (rest[payload_len] != '\n')
    throw ProtocolError("malformed frame: missing payload terminator");
  if (rest.size() != payload_len + 1)
    throw ProtocolError("malformed frame: trailing bytes after payload");
  std::string_view payload = rest.substr(0, payload_len);

  WireMessage msg;
  msg.node_id = node_id;
  PayloadReader reader(payload);
  if (kind_name == "SelectedSet") {
    msg.kind = MsgKind::SelectedSet;
    SelectedSetBody b;
    b.indices = reader.int_list("indices");
    b.values = reader.vector("values");
    msg.body = std::move(b);
  } else if (kind_name == "ModelBroadcast") {
    msg.kind = MsgKind::ModelBroadcast;
    ModelBroadcastBody b;
    b.E = reader.int_list("E");
    b.support = reader.int_list("support");
    b.general_rule = reader.integer("general") != 0;
    msg.body = std::move(b);
  } else if (kind_name == "LocalSummary") {
    msg.kind = MsgKind::LocalSummary;
    LocalSummaryBody b;
    b.beta_E = reader.vector("beta_E");
    b.info = reader.symmat("info");
    b.gamma = reader.vector("gamma");
    b.yty = reader.num("yty");
    b.n_k = static_cast<int>(reader.integer("n_k"));
    msg.body = std::move(b);
  } else if (kind_name == "MleBroadcast") {
    msg.kind = MsgKind::MleBroadcast;
    MleBroadcastBody b;
    b.beta_E = reader.vector("beta_E");
    msg.body = std::move(b);
  } else if (kind_name == "ResidualCompensation") {
    msg.kind = MsgKind::ResidualCompensation;
    ResidualCompensationBody b;
    b.values = reader.vector("values");
    msg.body = std::move(b);
  } else {
    throw ProtocolError("unknown message kind '" + kind_name + "'");
  }
  reader.finish();
  return msg;
}

}  // namespace distsi
