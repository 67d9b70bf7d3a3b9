"""Thin helpers over the tree-sitter C grammar used by several stages."""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Iterator

import tree_sitter_c
from tree_sitter import Language, Node, Parser, Tree

C_LANGUAGE = Language(tree_sitter_c.language())

# Identifiers that resolve through the C runtime rather than the project.
STDLIB_FUNCTIONS = frozenset(
    """
    malloc calloc realloc free aligned_alloc abort exit atexit atoi atol atoll atof strtol strtoul
    strtoll strtoull strtod strtof qsort bsearch abs labs llabs div rand srand getenv system
    memcpy memmove memset memcmp memchr strcpy strncpy strcat strncat strcmp strncmp strlen strchr
    strrchr strstr strtok strdup strndup strspn strcspn strpbrk strerror
    printf fprintf sprintf snprintf vprintf vfprintf vsprintf vsnprintf puts fputs putchar fputc
    putc scanf fscanf sscanf getchar fgetc getc fgets gets ungetc fopen fclose fflush fread fwrite
    fseek ftell rewind perror remove rename tmpfile feof ferror
    sqrt pow fabs floor ceil round exp log log10 log2 sin cos tan asin acos atan atan2 fmod hypot
    sinh cosh tanh fmin fmax trunc lround
    isalpha isdigit isalnum isspace isupper islower toupper tolower isxdigit ispunct isprint iscntrl
    assert time clock difftime
    """.split()
)

IO_FUNCTIONS = frozenset(
    """
    printf fprintf puts fputs putchar fputc putc scanf fscanf getchar fgetc getc fgets gets
    perror vprintf vfprintf fflush fopen fclose fread fwrite
    """.split()
)

# Typedef names that come from standard headers and need no project definition.
STANDARD_TYPE_NAMES = frozenset(
    """
    size_t ssize_t ptrdiff_t intptr_t uintptr_t intmax_t uintmax_t wchar_t bool FILE va_list
    int8_t int16_t int32_t int64_t uint8_t uint16_t uint32_t uint64_t time_t clock_t off_t
    jmp_buf div_t ldiv_t max_align_t fpos_t sig_atomic_t
    """.split()
)


@lru_cache(maxsize=None)
def _parser() -> Parser:
    return Parser(C_LANGUAGE)


def parse(source: str | bytes) -> Tree:
    if isinstance(source, str):
        source = source.encode("utf-8")
    return _parser().parse(source)


def text(node: Node | None) -> str:
    if node is None:
        return ""
    return node.text.decode("utf-8", errors="replace")


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(current.children))


def first_error(node: Node) -> Node | None:
    for n in walk(node):
        if n.type == "ERROR" or n.is_missing:
            return n
    return None


def declarator_name(declarator: Node | None) -> str | None:
    """Innermost identifier of a (possibly nested) declarator."""
    while declarator is not None:
        if declarator.type in ("identifier", "field_identifier", "type_identifier"):
            return text(declarator)
        inner = declarator.child_by_field_name("declarator")
        if inner is None:
            for child in declarator.named_children:
                if child.type in ("identifier", "parenthesized_declarator", "pointer_declarator",
                                  "function_declarator", "array_declarator"):
                    inner = child
                    break
        declarator = inner
    return None


def function_declarator(defn: Node) -> Node | None:
    node = defn.child_by_field_name("declarator")
    while node is not None and node.type != "function_declarator":
        node = node.child_by_field_name("declarator")
    return node


def function_name(defn: Node) -> str | None:
    fdecl = function_declarator(defn)
    if fdecl is None:
        return None
    return declarator_name(fdecl.child_by_field_name("declarator"))


def called_names(node: Node) -> list[str]:
    """Names of directly called identifiers, in source order, with repeats."""
    names = []
    for n in walk(node):
        if n.type == "call_expression":
            fn = n.child_by_field_name("function")
            if fn is not None and fn.type == "identifier":
                names.append(text(fn))
    return names


def tokens(node: Node) -> list[str]:
    """Leaf token texts with comments dropped; string literals stay whole."""
    out: list[str] = []

    def visit(n: Node) -> None:
        if n.type == "comment":
            return
        if n.type in ("string_literal", "char_literal", "system_lib_string"):
            out.append(text(n))
            return
        if n.type == "preproc_arg":
            out.extend(text(n).split())
            return
        if n.child_count == 0:
            if n.type != "\n":
                out.append(text(n).strip())
            return
        for c in n.children:
            visit(c)

    visit(node)
    return [t for t in out if t]


def normalized(source_or_node: str | Node) -> str:
    """Whitespace- and comment-insensitive token stream."""
    node = parse(source_or_node).root_node if isinstance(source_or_node, str) else source_or_node
    return " ".join(tokens(node))


_WS = re.compile(r"\s+")
_COMMENT = re.compile(r"/\*.*?\*/|//[^\n]*", re.S)


def squash(s: str) -> str:
    return _WS.sub(" ", s).strip()


class TopItem:
    """A top-level construct of a C file: kind, defining name, original text."""

    __slots__ = ("kind", "name", "text", "node")

    def __init__(self, kind: str, name: str, text_: str, node: Node | None = None):
        self.kind = kind  # include | macro | function | prototype | global | type | other
        self.name = name
        self.text = text_
        self.node = node

    @property
    def key(self) -> str:
        return normalized(self.node) if self.node is not None else squash(self.text)

    def __repr__(self) -> str:
        return f"TopItem({self.kind!r}, {self.name!r})"


def _is_prototype(decl: Node | None) -> bool:
    while decl is not None:
        if decl.type == "function_declarator":
            return True
        if decl.type == "parenthesized_declarator":
            return False
        decl = decl.child_by_field_name("declarator")
    return False


def split_toplevel(source: str) -> list[TopItem]:
    """Split a translation unit into named top-level items, keeping source order.

    Conditional-compilation blocks and anything unrecognized come back as
    ``other`` items carrying their raw text.
    """
    root = parse(source).root_node
    items: list[TopItem] = []
    for node in root.named_children:
        t = node.type
        body = text(node)
        if t == "comment":
            continue
        if t == "preproc_include":
            items.append(TopItem("include", squash(body), body.rstrip("\n"), node))
        elif t in ("preproc_def", "preproc_function_def"):
            items.append(TopItem("macro", text(node.child_by_field_name("name")), body.rstrip("\n"), node))
        elif t == "function_definition":
            items.append(TopItem("function", function_name(node) or "?", body, node))
        elif t == "declaration":
            decls = node.children_by_field_name("declarator")
            names = []
            proto = False
            for d in decls:
                inner = d.child_by_field_name("declarator") if d.type == "init_declarator" else d
                proto = proto or _is_prototype(inner)
                n = declarator_name(inner)
                if n:
                    names.append(n)
            type_node = node.child_by_field_name("type")
            if not names and type_node is not None:
                items.append(TopItem("type", squash(text(type_node)), body, node))
            else:
                items.append(TopItem("prototype" if proto else "global", ",".join(names), body, node))
        elif t == "type_definition":
            names = [declarator_name(d) for d in node.children_by_field_name("declarator")]
            items.append(TopItem("type", ",".join(n for n in names if n), body, node))
        elif t in ("struct_specifier", "union_specifier", "enum_specifier"):
            tag = node.child_by_field_name("name")
            name = f"{t.split('_')[0]} {text(tag)}" if tag is not None else squash(body)
            items.append(TopItem("type", name, body if body.rstrip().endswith(";") else body + ";", node))
        else:
            items.append(TopItem("other", "", body, node))
    return items


def defined_functions(source: str) -> list[str]:
    return [i.name for i in split_toplevel(source) if i.kind == "function"]


def prototype_of(node: Node) -> str:
    """Declaration text of a function definition (everything before the body) plus ``;``."""
    body = node.child_by_field_name("body")
    src = node.text[: body.start_byte - node.start_byte] if body is not None else node.text
    src = _COMMENT.sub(" ", src.decode("utf-8", errors="replace"))
    return squash(src) + ";"


def is_static(node: Node) -> bool:
    return any(c.type == "storage_class_specifier" and text(c) == "static" for c in node.children)
