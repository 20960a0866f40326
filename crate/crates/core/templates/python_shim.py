import contextlib
import io
import sys

_src = sys.stdin.read().strip()
_ns = {"__name__": "__candidate__"}
with open("{solution_file}") as _f:
    _code = compile(_f.read(), "{solution_file}", "exec")
with contextlib.redirect_stdout(io.StringIO()):
    exec(_code, _ns)
    _args = eval("(" + _src + ",)", {}) if _src else ()
    _result = _ns["{entry_point}"](*_args)
sys.stdout.write(repr(_result) + "\n")
