"""Minimal PLY reader/writer: ascii and binary_little_endian, scalar and list properties."""
from __future__ import annotations

import numpy as np

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    """Malformed PLY content; message carries line or byte offset context."""


def read_ply(path) -> dict[str, dict[str, np.ndarray]]:
    """Parse a PLY file into {element: {property: array}}.

    List properties come back as object arrays of int arrays.
    """
    with open(path, "rb") as f:
        data = f.read()

    if not data.startswith(b"ply"):
        raise PlyError(f"{path}: not a PLY file (missing 'ply' magic at offset 0)")
    end = data.find(b"end_header")
    if end < 0:
        raise PlyError(f"{path}: missing end_header")
    header_blob = data[:end]
    body_start = data.index(b"\n", end) + 1

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, [(prop, dtype, list_count_dtype|None)])
    for lineno, raw in enumerate(header_blob.decode("ascii", "replace").splitlines(), start=1):
        parts = raw.strip().split()
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"{path}:{lineno}: unsupported format '{parts[1]}'")
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyError(f"{path}:{lineno}: property before any element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], _TYPES[parts[3]], _TYPES[parts[2]]))
            else:
                if parts[1] not in _TYPES:
                    raise PlyError(f"{path}:{lineno}: unknown type '{parts[1]}'")
                elements[-1][2].append((parts[2], _TYPES[parts[1]], None))
    if fmt is None:
        raise PlyError(f"{path}: header has no format line")

    out: dict[str, dict[str, np.ndarray]] = {}
    if fmt == "binary_little_endian":
        offset = body_start
        for name, count, props in elements:
            if any(p[2] is not None for p in props):
                # list properties force row-by-row decoding
                cols: dict[str, list] = {p[0]: [] for p in props}
                for _ in range(count):
                    for pname, dt, list_dt in props:
                        if list_dt is None:
                            (val,) = np.frombuffer(data, dtype="<" + dt, count=1, offset=offset)
                            offset += np.dtype(dt).itemsize
                            cols[pname].append(val)
                        else:
                            (n,) = np.frombuffer(data, dtype="<" + list_dt, count=1, offset=offset)
                            offset += np.dtype(list_dt).itemsize
                            vals = np.frombuffer(data, dtype="<" + dt, count=int(n), offset=offset)
                            offset += int(n) * np.dtype(dt).itemsize
                            cols[pname].append(np.asarray(vals))
                out[name] = {
                    p[0]: (np.array(cols[p[0]], dtype=object) if p[2] is not None
                           else np.asarray(cols[p[0]]))
                    for p in props
                }
            else:
                dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
                need = count * dtype.itemsize
                if offset + need > len(data):
                    raise PlyError(f"{path}: element '{name}' truncated at byte offset {offset}")
                rec = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
                offset += need
                out[name] = {p[0]: rec[p[0]].copy() for p in props}
    else:
        lines = data[body_start:].decode("ascii", "replace").split("\n")
        li = 0
        header_lines = header_blob.count(b"\n") + 1
        for name, count, props in elements:
            cols = {p[0]: [] for p in props}
            for _ in range(count):
                while li < len(lines) and not lines[li].strip():
                    li += 1
                if li >= len(lines):
                    raise PlyError(f"{path}: element '{name}' truncated "
                                   f"(line {header_lines + li})")
                toks = lines[li].split()
                li += 1
                k = 0
                try:
                    for pname, dt, list_dt in props:
                        if list_dt is None:
                            cols[pname].append(float(toks[k]))
                            k += 1
                        else:
                            n = int(toks[k])
                            k += 1
                            cols[pname].append(np.array([float(t) for t in toks[k:k + n]]))
                            k += n
                except (IndexError, ValueError) as e:
                    raise PlyError(f"{path}: bad row at line {header_lines + li}: {e}") from e
            out[name] = {
                p[0]: (np.array(cols[p[0]], dtype=object) if p[2] is not None
                       else np.asarray(cols[p[0]], dtype=np.dtype(p[1])))
                for p in props
            }
    return out


def write_ply(path, elements: list[tuple[str, list[tuple[str, str, np.ndarray]]]],
              binary: bool = True) -> None:
    """Write elements = [(name, [(prop, type_name, column_or_list_rows)])].

    ``type_name`` is a PLY type; list properties are passed as
    ('prop', 'list uchar int', rows).
    """
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0"]
    for name, props in elements:
        count = len(props[0][2])
        header.append(f"element {name} {count}")
        for pname, tname, _ in props:
            header.append(f"property {tname} {pname}")
    header.append("end_header")

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        for name, props in elements:
            count = len(props[0][2])
            has_list = any(t.startswith("list") for _, t, _ in props)
            if binary:
                if has_list:
                    for i in range(count):
                        for pname, tname, col in props:
                            if tname.startswith("list"):
                                _, cnt_t, val_t = tname.split()
                                row = np.asarray(col[i])
                                f.write(np.array([len(row)], dtype="<" + _TYPES[cnt_t]).tobytes())
                                f.write(row.astype("<" + _TYPES[val_t]).tobytes())
                            else:
                                f.write(np.asarray(col[i], dtype="<" + _TYPES[tname]).tobytes())
                else:
                    rec = np.empty(count, dtype=np.dtype(
                        [(p[0], "<" + _TYPES[p[1]]) for p in props]))
                    for pname, tname, col in props:
                        rec[pname] = col
                    f.write(rec.tobytes())
            else:
                for i in range(count):
                    toks = []
                    for pname, tname, col in props:
                        if tname.startswith("list"):
                            row = np.asarray(col[i])
                            toks.append(str(len(row)))
                            toks.extend(str(int(v)) for v in row)
                        elif _TYPES[tname][0] in "iu":
                            toks.append(str(int(col[i])))
                        else:
                            toks.append(repr(float(col[i])))
                    f.write((" ".join(toks) + "\n").encode("ascii"))
