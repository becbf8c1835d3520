import textwrap
from pathlib import Path

import numpy as np
import pytest

from dpns.assembly import PhysicalParams
from dpns.config import ConfigError, RunConfig, load_config, parse_config


def cfg(text):
    return parse_config(textwrap.dedent(text), "run.ini")


def test_defaults():
    c = parse_config("")
    assert c == RunConfig()
    assert c.params == PhysicalParams()
    assert c.tol == 1e-10 and c.max_iter == 50 and c.method == "picard"
    assert c.out == Path("out") and c.seed == 0 and c.case == "zero"
    assert c.exact() is None
    src = c.sources()
    assert src.f_s is None and src.f_d is None


def test_full_file():
    c = cfg("""
        [mesh]
        level = 3
        levels = 4
        pattern = crossed
        [params]
        nu = 0.1   # inline comment
        sigma = 0
        [auxiliary]
        c_kappa = 0.5
        variant = xi
        [solver]
        method = newton
        tol = 1e-12
        max_iter = 7
        [output]
        dir = results/a
        [run]
        seed = 42
        serial = yes
    """)
    assert (c.level, c.levels, c.pattern) == (3, 4, "crossed")
    assert c.params.nu == 0.1 and c.params.sigma == 0.0
    assert c.auxiliary.c_kappa == 0.5 and c.aux_variant == "xi"
    assert (c.method, c.tol, c.max_iter) == ("newton", 1e-12, 7)
    assert c.out == Path("results/a") and c.seed == 42 and c.serial is True


def test_expression_sources():
    c = cfg("""
        [source]
        case = expr
        f_s = sin(pi*x), 0
        f_d = 1 + x*y
        phi_f_dir = x
    """)
    src = c.sources()
    x = np.array([0.5])
    y = np.array([1.5])
    u, v = src.f_s(x, y)
    assert u[0] == pytest.approx(1.0) and v[0] == 0.0
    assert src.f_d(x, y)[0] == pytest.approx(1.75)
    assert src.phi_f_dir(x, y)[0] == pytest.approx(0.5)
    assert src.u_dir is None
    assert c.exact() is None


def test_exact_expressions():
    c = cfg("""
        [source]
        case = expr
        exact_u = y - 1, 0
        exact_p = x
        exact_phi_m = x*y
        exact_phi_f = 0
    """)
    ex = c.exact()
    assert ex is not None and ex.name == "expr"
    src = c.sources()
    assert src.u_dir is not None and src.f_s is not None


def test_homogeneous_and_scaling():
    c = cfg("""
        [source]
        case = trig
        homogeneous = true
        scale_s = 2
        scale_d = 0
    """)
    base = RunConfig(case="trig").sources()
    src = c.sources()
    assert src.u_dir is None and src.phi_m_dir is None and src.phi_f_dir is None
    x, y = np.array([0.3]), np.array([1.4])
    assert np.allclose(np.array(src.f_s(x, y)), 2 * np.array(base.f_s(x, y)))
    x, y = np.array([0.3]), np.array([0.4])
    assert not np.any(src.f_d(x, y))


@pytest.mark.parametrize("text,fragment,line,section,key", [
    ("[mesh]\nlevel = two\n", "expected an integer", 2, "mesh", "level"),
    ("[mesh]\nlevel = 0\n", "at least 1", 2, "mesh", "level"),
    ("[params]\nnu = -1\n", "nu must be positive", 2, "params", "nu"),
    ("[params]\nrho = nan\n", "finite", 2, "params", "rho"),
    ("[solver]\nmethod = gmres\n", "expected one of picard, newton", 2, "solver", "method"),
    ("[solver]\ntol = 0\n", "must be positive", 2, "solver", "tol"),
    ("\n[physics]\nnu = 1\n", "unknown section", 2, "physics", None),
    ("[mesh]\nlevl = 2\n", "unknown key", 2, "mesh", "levl"),
    ("[run]\nserial = maybe\n", "boolean", 2, "run", "serial"),
    ("[source]\ncase = expr\nf_d = log(x)\n", "unknown function", 3, "source", "f_d"),
    ("[source]\ncase = expr\nf_s = x\n", "2-component", 3, "source", "f_s"),
    ("[source]\nf_d = x\n", "require case = expr", 2, "source", "f_d"),
    ("[source]\ncase = expr\nexact_u = x, y\n", "missing exact_p", 3, "source", "exact_u"),
    ("[run]\nsamples = 10\n", "at least 100", 2, "run", "samples"),
    ("[auxiliary]\nc_kappa = 0\n", "positive", 1, "auxiliary", None),
])
def test_errors_are_located(text, fragment, line, section, key):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config(text, "bad.ini")
    err = info.value
    assert (err.line, err.section, err.key) == (line, section, key)
    assert str(err).startswith(f"bad.ini:{line} [{section}]")


def test_parser_errors():
    with pytest.raises(ConfigError) as info:
        parse_config("[mesh]\nlevel = 1\nlevel = 2\n", "dup.ini")
    assert info.value.line == 3
    assert "While reading" not in str(info.value)
    with pytest.raises(ConfigError):
        parse_config("level = 1\n")


def test_load_config(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nseed = 5\n")
    assert load_config(p).seed == 5
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.ini")
