"""Minimal PDF reader: object graph, page tree, and content-stream text/image recovery.

No PDF library survives in this environment, so this module parses the
well-formed subset needed by the pipeline itself: classic cross-reference
tables (with a raw-scan fallback), Flate and ASCII85 stream filters, Type1
text operators, and image XObjects placed through the CTM. Encrypted files
are rejected outright. Scanned pages (no text operators) simply yield no
runs; OCR is out of scope.

Coordinates in the parsed result stay in PDF points with a bottom-left
origin; callers flip to top-left reading order.
"""

from __future__ import annotations

import base64
import math
import re
import zlib
from dataclasses import dataclass, field

from autopr.errors import EmptyDocumentError, EncryptedPdfError, MalformedPdfError

__all__ = [
    "PdfDocument",
    "PdfPage",
    "TextRun",
    "PlacedImage",
    "EmbeddedImage",
    "parse_pdf",
    "estimate_text_width",
]


@dataclass
class TextRun:
    """One show-text emission: string plus device-space baseline origin."""

    text: str
    x: float
    y: float
    font_size: float
    width: float


@dataclass
class EmbeddedImage:
    """Decodable payload of an image XObject."""

    width: int
    height: int
    color_space: str
    bits: int
    filters: tuple[str, ...]
    data: bytes


@dataclass
class PlacedImage:
    """An image XObject drawn on a page; rect in PDF points, bottom-left origin."""

    x0: float
    y0: float
    x1: float
    y1: float
    image: EmbeddedImage | None


@dataclass
class PdfPage:
    index: int
    width_pt: float
    height_pt: float
    runs: list[TextRun] = field(default_factory=list)
    images: list[PlacedImage] = field(default_factory=list)


@dataclass
class PdfDocument:
    pages: list[PdfPage]


# Rough per-character advance factors (em fractions) for Helvetica-like faces.
# Used only to size text rects for layout heuristics; exactness is not needed.
_NARROW = set("iIljtf.,;:!|'`()[]{}r-\"")
_WIDE = set("mwMW@%")
_CAPS = set("ABCDEFGHKNOPQRSUVXYZ#&")


def estimate_text_width(text: str, font_size: float) -> float:
    """Approximate rendered width of ``text`` in points."""
    total = 0.0
    for ch in text:
        if ch == " ":
            total += 0.28
        elif ch in _NARROW:
            total += 0.33
        elif ch in _WIDE:
            total += 0.85
        elif ch in _CAPS:
            total += 0.70
        elif ch.isdigit():
            total += 0.556
        else:
            total += 0.52
    return total * font_size


# --- object-level parsing ---

class _Ref(tuple):
    """Indirect object reference (num, gen)."""


_WS = b"\x00\t\n\x0c\r "
_DELIM = b"()<>[]{}/%"


class _Lexer:
    """Recursive-descent parser for PDF object syntax."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def _skip_ws(self) -> None:
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = self.data[self.pos]
            if c in _WS:
                self.pos += 1
            elif c == 0x25:  # '%' comment runs to EOL
                while self.pos < n and data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def parse_value(self):
        self._skip_ws()
        if self.pos >= len(self.data):
            raise MalformedPdfError("unexpected end of data")
        c = self.data[self.pos]
        if c == 0x3C:  # '<'
            if self.data[self.pos : self.pos + 2] == b"<<":
                return self._parse_dict()
            return self._parse_hex_string()
        if c == 0x5B:  # '['
            return self._parse_array()
        if c == 0x28:  # '('
            return self._parse_literal_string()
        if c == 0x2F:  # '/'
            return self._parse_name()
        token = self._next_token()
        if token in (b"true", b"false"):
            return token == b"true"
        if token == b"null":
            return None
        # Number, possibly the start of an "N G R" reference.
        try:
            num = float(token) if b"." in token else int(token)
        except ValueError as exc:
            raise MalformedPdfError(f"bad token {token!r}") from exc
        if isinstance(num, int):
            save = self.pos
            self._skip_ws()
            gen_tok = self._peek_token()
            if gen_tok is not None and gen_tok.isdigit():
                self._next_token()
                self._skip_ws()
                if self._peek_token() == b"R":
                    self._next_token()
                    return _Ref((num, int(gen_tok)))
            self.pos = save
        return num

    def _peek_token(self) -> bytes | None:
        save = self.pos
        try:
            return self._next_token()
        except MalformedPdfError:
            return None
        finally:
            self.pos = save

    def _next_token(self) -> bytes:
        self._skip_ws()
        start = self.pos
        data, n = self.data, len(self.data)
        if start >= n:
            raise MalformedPdfError("unexpected end of data")
        while self.pos < n and data[self.pos] not in _WS and data[self.pos] not in _DELIM:
            self.pos += 1
        if self.pos == start:  # delimiter character itself
            self.pos += 1
        return data[start : self.pos]

    def _parse_name(self) -> str:
        self.pos += 1  # '/'
        start = self.pos
        data, n = self.data, len(self.data)
        while self.pos < n and data[self.pos] not in _WS and data[self.pos] not in _DELIM:
            self.pos += 1
        raw = data[start : self.pos]
        # #xx hex escapes inside names
        if b"#" in raw:
            raw = re.sub(rb"#([0-9A-Fa-f]{2})", lambda m: bytes([int(m.group(1), 16)]), raw)
        return "/" + raw.decode("latin-1")

    def _parse_dict(self) -> dict:
        self.pos += 2  # '<<'
        out: dict[str, object] = {}
        while True:
            self._skip_ws()
            if self.data[self.pos : self.pos + 2] == b">>":
                self.pos += 2
                return out
            key = self.parse_value()
            if not isinstance(key, str) or not key.startswith("/"):
                raise MalformedPdfError("dictionary key is not a name")
            out[key] = self.parse_value()

    def _parse_array(self) -> list:
        self.pos += 1  # '['
        out = []
        while True:
            self._skip_ws()
            if self.pos >= len(self.data):
                raise MalformedPdfError("unterminated array")
            if self.data[self.pos] == 0x5D:  # ']'
                self.pos += 1
                return out
            out.append(self.parse_value())

    def _parse_literal_string(self) -> bytes:
        self.pos += 1  # '('
        out = bytearray()
        depth = 1
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = data[self.pos]
            self.pos += 1
            if c == 0x5C:  # backslash
                if self.pos >= n:
                    break
                e = data[self.pos]
                self.pos += 1
                mapped = {0x6E: 10, 0x72: 13, 0x74: 9, 0x62: 8, 0x66: 12}.get(e)
                if mapped is not None:
                    out.append(mapped)
                elif e in b"01234567":
                    oct_digits = bytes([e])
                    while len(oct_digits) < 3 and self.pos < n and data[self.pos] in b"01234567":
                        oct_digits += bytes([data[self.pos]])
                        self.pos += 1
                    out.append(int(oct_digits, 8) & 0xFF)
                elif e in b"\r\n":  # line continuation
                    if e == 0x0D and self.pos < n and data[self.pos] == 0x0A:
                        self.pos += 1
                else:
                    out.append(e)
            elif c == 0x28:
                depth += 1
                out.append(c)
            elif c == 0x29:
                depth -= 1
                if depth == 0:
                    return bytes(out)
                out.append(c)
            else:
                out.append(c)
        raise MalformedPdfError("unterminated literal string")

    def _parse_hex_string(self) -> bytes:
        self.pos += 1  # '<'
        end = self.data.find(b">", self.pos)
        if end < 0:
            raise MalformedPdfError("unterminated hex string")
        hexdigits = re.sub(rb"\s", b"", self.data[self.pos : end])
        self.pos = end + 1
        if len(hexdigits) % 2:
            hexdigits += b"0"
        try:
            return bytes.fromhex(hexdigits.decode("ascii"))
        except ValueError as exc:
            raise MalformedPdfError("bad hex string") from exc


class _Objects:
    """Indirect-object store with lazy parsing and reference resolution."""

    def __init__(self, data: bytes):
        self.data = data
        self.spans: dict[int, tuple[int, int]] = {}
        self.cache: dict[int, object] = {}
        self.streams: dict[int, bytes] = {}
        for m in re.finditer(rb"(?m)^[^0-9]{0,2}?(\d+)\s+(\d+)\s+obj\b", data):
            self.spans[int(m.group(1))] = (m.start(1), m.end())
        if not self.spans:
            # No line-anchored matches; accept objects anywhere.
            for m in re.finditer(rb"(\d+)\s+\d+\s+obj\b", data):
                self.spans.setdefault(int(m.group(1)), (m.start(1), m.end()))

    def get(self, ref):
        while isinstance(ref, _Ref):
            num = ref[0]
            if num in self.cache:
                ref = self.cache[num]
                continue
            if num not in self.spans:
                return None
            _, body_start = self.spans[num]
            lexer = _Lexer(self.data, body_start)
            value = lexer.parse_value()
            if isinstance(value, dict):
                lexer._skip_ws()
                if self.data[lexer.pos : lexer.pos + 6] == b"stream":
                    self.streams[num] = self._read_stream(value, lexer.pos + 6)
            self.cache[num] = value
            ref = value
        return ref

    def stream_for(self, ref: _Ref) -> bytes | None:
        self.get(ref)
        return self.streams.get(ref[0])

    def _read_stream(self, sdict: dict, pos: int) -> bytes:
        data = self.data
        if data[pos : pos + 2] == b"\r\n":
            pos += 2
        elif data[pos : pos + 1] in (b"\n", b"\r"):
            pos += 1
        length = self.get(sdict.get("/Length"))
        if isinstance(length, (int, float)) and length >= 0:
            end = pos + int(length)
            if data[end : end + 20].lstrip(bytes(_WS)).startswith(b"endstream"):
                return data[pos:end]
        end = data.find(b"endstream", pos)
        if end < 0:
            raise MalformedPdfError("unterminated stream")
        return data[pos:end].rstrip(b"\r\n")


def _decode_stream(raw: bytes, sdict: dict, objects: _Objects) -> bytes:
    filters = objects.get(sdict.get("/Filter"))
    if filters is None:
        return raw
    if not isinstance(filters, list):
        filters = [filters]
    out = raw
    for f in filters:
        f = objects.get(f)
        if f == "/ASCII85Decode":
            end = out.find(b"~>")
            chunk = out[: end + 2] if end >= 0 else out
            out = base64.a85decode(chunk.strip(), adobe=True)
        elif f == "/FlateDecode":
            try:
                out = zlib.decompress(out)
            except zlib.error as exc:
                raise MalformedPdfError("bad Flate stream") from exc
        elif f in ("/DCTDecode", "/JPXDecode"):
            return out  # compressed image payload, decoded by the rasterizer
        else:
            raise MalformedPdfError(f"unsupported stream filter {f}")
    return out


# --- content-stream interpretation ---

_Matrix = tuple[float, float, float, float, float, float]
_IDENTITY: _Matrix = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


def _mat_mul(m: _Matrix, n: _Matrix) -> _Matrix:
    a1, b1, c1, d1, e1, f1 = m
    a2, b2, c2, d2, e2, f2 = n
    return (
        a1 * a2 + b1 * c2,
        a1 * b2 + b1 * d2,
        c1 * a2 + d1 * c2,
        c1 * b2 + d1 * d2,
        e1 * a2 + f1 * c2 + e2,
        e1 * b2 + f1 * d2 + f2,
    )


def _apply(m: _Matrix, x: float, y: float) -> tuple[float, float]:
    a, b, c, d, e, f = m
    return (a * x + c * y + e, b * x + d * y + f)


_STRING_BYTES = re.compile(rb"[()]")


def _tokenize_content(data: bytes):
    """Yield operands and operator tokens from a content stream."""
    lexer = _Lexer(data)
    n = len(data)
    while True:
        lexer._skip_ws()
        if lexer.pos >= n:
            return
        c = data[lexer.pos]
        if c in b"(<[/" or c in b"+-." or (0x30 <= c <= 0x39):
            if c == 0x3C and data[lexer.pos : lexer.pos + 2] == b"<<":
                yield ("operand", lexer._parse_dict())
            elif c == 0x28:
                yield ("operand", lexer._parse_literal_string())
            elif c == 0x3C:
                yield ("operand", lexer._parse_hex_string())
            elif c == 0x5B:
                yield ("operand", lexer._parse_array())
            elif c == 0x2F:
                yield ("operand", lexer._parse_name())
            else:
                tok = lexer._next_token()
                try:
                    yield ("operand", float(tok) if b"." in tok else int(tok))
                except ValueError:
                    yield ("op", tok.decode("latin-1", "replace"))
        else:
            tok = lexer._next_token()
            yield ("op", tok.decode("latin-1", "replace"))


def _decode_pdf_text(raw: bytes) -> str:
    return raw.decode("latin-1", errors="replace")


class _ContentInterpreter:
    """Replays enough of the graphics model to place text runs and images."""

    def __init__(self, xobjects: dict[str, EmbeddedImage | None]):
        self.xobjects = xobjects
        self.runs: list[TextRun] = []
        self.images: list[PlacedImage] = []
        self.ctm: _Matrix = _IDENTITY
        self.stack: list[_Matrix] = []
        self.tm: _Matrix = _IDENTITY
        self.tlm: _Matrix = _IDENTITY
        self.font_size = 0.0
        self.leading = 0.0

    def run(self, content: bytes) -> None:
        operands: list = []
        for kind, value in _tokenize_content(content):
            if kind == "operand":
                operands.append(value)
                continue
            self._execute(value, operands)
            operands.clear()

    def _execute(self, op: str, stack: list) -> None:
        if op == "q":
            self.stack.append(self.ctm)
        elif op == "Q":
            if self.stack:
                self.ctm = self.stack.pop()
        elif op == "cm" and len(stack) >= 6:
            self.ctm = _mat_mul(tuple(float(v) for v in stack[-6:]), self.ctm)
        elif op == "BT":
            self.tm = self.tlm = _IDENTITY
        elif op == "Tf" and len(stack) >= 2:
            self.font_size = float(stack[-1])
        elif op == "TL" and stack:
            self.leading = float(stack[-1])
        elif op == "Tm" and len(stack) >= 6:
            self.tm = self.tlm = tuple(float(v) for v in stack[-6:])
        elif op in ("Td", "TD") and len(stack) >= 2:
            tx, ty = float(stack[-2]), float(stack[-1])
            if op == "TD":
                self.leading = -ty
            self.tlm = _mat_mul((1, 0, 0, 1, tx, ty), self.tlm)
            self.tm = self.tlm
        elif op == "T*":
            self.tlm = _mat_mul((1, 0, 0, 1, 0, -self.leading), self.tlm)
            self.tm = self.tlm
        elif op == "Tj" and stack:
            self._show(stack[-1])
        elif op == "'" and stack:
            self._execute("T*", [])
            self._show(stack[-1])
        elif op == '"' and len(stack) >= 3:
            self._execute("T*", [])
            self._show(stack[-1])
        elif op == "TJ" and stack and isinstance(stack[-1], list):
            parts: list[str] = []
            for item in stack[-1]:
                if isinstance(item, bytes):
                    parts.append(_decode_pdf_text(item))
                elif isinstance(item, (int, float)) and item < -180:
                    parts.append(" ")
            self._show("".join(parts))
        elif op == "Do" and stack and isinstance(stack[-1], str):
            self._draw_xobject(stack[-1])

    def _show(self, raw) -> None:
        text = _decode_pdf_text(raw) if isinstance(raw, bytes) else str(raw)
        if not text.strip():
            return
        m = _mat_mul(self.tm, self.ctm)
        x, y = m[4], m[5]
        scale = math.hypot(m[2], m[3]) or 1.0
        size = self.font_size * scale
        self.runs.append(
            TextRun(text=text, x=x, y=y, font_size=size, width=estimate_text_width(text, size))
        )

    def _draw_xobject(self, name: str) -> None:
        name = name.lstrip("/")
        if name not in self.xobjects:
            return
        corners = [_apply(self.ctm, x, y) for x, y in ((0, 0), (1, 0), (0, 1), (1, 1))]
        xs = [p[0] for p in corners]
        ys = [p[1] for p in corners]
        self.images.append(
            PlacedImage(
                x0=min(xs), y0=min(ys), x1=max(xs), y1=max(ys), image=self.xobjects[name]
            )
        )


# --- document assembly ---

def _collect_pages(objects: _Objects, node, inherited: dict, out: list) -> None:
    node = objects.get(node)
    if not isinstance(node, dict):
        return
    merged = dict(inherited)
    for key in ("/MediaBox", "/Resources"):
        if key in node:
            merged[key] = node[key]
    if node.get("/Type") == "/Pages" or "/Kids" in node:
        for kid in objects.get(node.get("/Kids")) or []:
            _collect_pages(objects, kid, merged, out)
    else:
        out.append((node, merged))


def _xobject_images(objects: _Objects, resources) -> dict[str, EmbeddedImage | None]:
    resources = objects.get(resources)
    images: dict[str, EmbeddedImage | None] = {}
    if not isinstance(resources, dict):
        return images
    xdict = objects.get(resources.get("/XObject"))
    if not isinstance(xdict, dict):
        return images
    for name, ref in xdict.items():
        entry = objects.get(ref)
        if not isinstance(entry, dict) or entry.get("/Subtype") != "/Image":
            images[name[1:]] = None
            continue
        raw = objects.stream_for(ref) if isinstance(ref, _Ref) else None
        embedded = None
        if raw is not None:
            try:
                data = _decode_stream(raw, entry, objects)
                filters = objects.get(entry.get("/Filter")) or []
                if not isinstance(filters, list):
                    filters = [filters]
                embedded = EmbeddedImage(
                    width=int(objects.get(entry.get("/Width")) or 0),
                    height=int(objects.get(entry.get("/Height")) or 0),
                    color_space=str(objects.get(entry.get("/ColorSpace")) or ""),
                    bits=int(objects.get(entry.get("/BitsPerComponent")) or 8),
                    filters=tuple(str(f) for f in filters),
                    data=data,
                )
            except MalformedPdfError:
                embedded = None
        images[name[1:]] = embedded
    return images


def _page_content(objects: _Objects, page: dict) -> bytes:
    contents = page.get("/Contents")
    refs = contents if isinstance(contents, list) else [contents]
    chunks = []
    for ref in refs:
        if not isinstance(ref, _Ref):
            ref_obj = objects.get(ref)
            if isinstance(ref_obj, list):
                refs.extend(ref_obj)
            continue
        raw = objects.stream_for(ref)
        sdict = objects.get(ref)
        if raw is not None and isinstance(sdict, dict):
            chunks.append(_decode_stream(raw, sdict, objects))
    return b"\n".join(chunks)


def parse_pdf(data: bytes) -> PdfDocument:
    """Parse PDF bytes into positioned text runs and image placements per page.

    Raises MalformedPdfError for containers this reader cannot interpret,
    EncryptedPdfError for encrypted files, and EmptyDocumentError when the
    page tree is empty.
    """
    if not isinstance(data, (bytes, bytearray)) or not data.startswith(b"%PDF-"):
        raise MalformedPdfError("not a PDF container")
    if re.search(rb"/Encrypt\b", data) is not None:
        raise EncryptedPdfError("encrypted documents are not supported")

    objects = _Objects(bytes(data))
    root = None
    for m in re.finditer(rb"/Root\s+(\d+)\s+(\d+)\s+R", data):
        root = _Ref((int(m.group(1)), int(m.group(2))))
    catalog = objects.get(root) if root is not None else None
    if not isinstance(catalog, dict):
        # Fallback: any object typed /Catalog.
        for num in objects.spans:
            candidate = objects.get(_Ref((num, 0)))
            if isinstance(candidate, dict) and candidate.get("/Type") == "/Catalog":
                catalog = candidate
                break
    if not isinstance(catalog, dict):
        raise MalformedPdfError("missing document catalog")

    page_nodes: list[tuple[dict, dict]] = []
    _collect_pages(objects, catalog.get("/Pages"), {}, page_nodes)
    if not page_nodes:
        raise EmptyDocumentError("document has no pages")

    pages: list[PdfPage] = []
    for index, (node, inherited) in enumerate(page_nodes):
        media = objects.get(inherited.get("/MediaBox")) or [0, 0, 612, 792]
        width = float(objects.get(media[2])) - float(objects.get(media[0]))
        height = float(objects.get(media[3])) - float(objects.get(media[1]))
        interp = _ContentInterpreter(_xobject_images(objects, inherited.get("/Resources")))
        try:
            interp.run(_page_content(objects, node))
        except MalformedPdfError:
            raise
        except Exception as exc:  # defensive: malformed operators
            raise MalformedPdfError(f"content stream error on page {index}: {exc}") from exc
        pages.append(
            PdfPage(
                index=index,
                width_pt=width,
                height_pt=height,
                runs=interp.runs,
                images=interp.images,
            )
        )
    return PdfDocument(pages=pages)
