import json
import math

import pytest

from nonbilocal import bilocality, cli, protocols as pr
from nonbilocal.bilocality import BsmScenario


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_usage(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(list(argv))
    return exc.value.code, capsys.readouterr().err


@pytest.fixture(autouse=True)
def no_user_config(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.CONFIG_ENV, str(tmp_path / "absent.cfg"))


class TestClosedForm:
    @pytest.mark.parametrize("argv,text", [
        (["--scenario", "22", "--case", "c1", "--p", "0.5"], "1.189207 violated=true"),
        (["--scenario", "13", "--case", "c2", "--p", "0.25"], "0.968246 violated=false"),
        (["--scenario", "22", "--case", "d2", "--p", "0.5", "--w", "0.5"], "1.264911 violated=true"),
    ])
    def test_examples(self, capsys, argv, text):
        code, out, _ = run(capsys, "closed-form", *argv)
        assert code == 0
        assert out.strip() == text

    def test_json(self, capsys):
        code, out, _ = run(capsys, "closed-form", "--scenario", "22", "--case", "d1", "--p", "0.5", "--w", "0.25",
                           "--average", "--format", "json")
        payload = json.loads(out)
        assert payload["success_prob"] == pytest.approx(0.375)
        assert payload["b_average"] == pytest.approx(0.375 * math.sqrt(2) / 1.375**0.25 + 0.625)

    @pytest.mark.parametrize("argv", [
        ["closed-form", "--scenario", "22", "--case", "c1", "--p", "0.5", "--w", "0.2"],
        ["closed-form", "--scenario", "22", "--case", "d1", "--p", "0.5"],
        ["closed-form", "--scenario", "22", "--case", "c1", "--p", "1.5"],
        ["closed-form", "--scenario", "14", "--case", "d2", "--p", "1", "--w", "1"],
        ["closed-form", "--scenario", "99", "--case", "c1", "--p", "0.5"],
        ["sweep", "--scenario", "22", "--case", "c1", "--p-grid", "0:1:1"],
        ["sweep", "--scenario", "22", "--case", "d1", "--p-grid", "0:1:3", "--w-grid", "0:1:3", "--r", "abc"],
        ["threshold", "--scenario", "22", "--case", "d1"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, err = run_usage(capsys, *argv)
        assert code == 2
        assert "error" in err


class TestSweep:
    def test_two_two_curve(self, capsys):
        code, out, _ = run(capsys, "sweep", "--scenario", "22", "--case", "c1", "--p-grid", "0:1:101")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == ",".join(cli.FIELDNAMES)
        records = cli.records_from_csv(out)
        assert len(records) == 101
        for rec in records:
            assert rec.b_value == pytest.approx(rec.b_closed_form, abs=1e-8)
            assert rec.b_closed_form == pytest.approx(math.sqrt(2 * math.sqrt(1 - rec.p)), abs=1e-15)

    def test_surface(self, tmp_path, capsys):
        path = tmp_path / "s.csv"
        code, _, _ = run(capsys, "sweep", "--scenario", "14", "--case", "d2", "--p-grid", "0:1:51", "--w-grid", "0:1:51",
                         "--out", str(path))
        assert code == 0
        raw = path.read_bytes()
        assert b"\r" not in raw
        records = cli.records_from_csv(raw.decode("utf-8"))
        assert len(records) == 2601
        # p-major then w
        assert [(r.p, r.w) for r in records[:3]] == [(0.0, 0.0), (0.0, 0.02), (0.0, 0.04)]
        assert records[51].p == pytest.approx(0.02)
        for rec in records:
            if rec.flag == "zero_success":
                assert rec.b_value is None and rec.success_prob == 0.0
            elif rec.b_closed_form is not None:
                assert rec.b_value == pytest.approx(rec.b_closed_form, abs=1e-8)
        assert sum(r.flag == "zero_success" for r in records) == 101

    def test_average_column(self, capsys):
        code, out, _ = run(capsys, "sweep", "--average", "--scenario", "13", "--case", "d1",
                           "--p-grid", "0:0.9:4", "--w-grid", "0:0.9:4")
        records = cli.records_from_csv(out)
        assert all(r.b_average is not None for r in records)
        for r in records:
            assert r.b_average == pytest.approx(pr.average_value(BsmScenario.ONE_THREE, pr.ProtectionCase.WEAK_SINGLE_ARM, r.p, r.w))

    def test_csv_round_trip(self):
        records = cli.sweep_records(BsmScenario.ONE_THREE, "d2", [0.0, 1 / 3, 1.0], [0.1, 2 / 7, 1.0], average=True)
        again = cli.records_from_csv(cli.records_to_csv(records))
        assert again == records

    def test_json_flat(self, capsys):
        code, out, _ = run(capsys, "sweep", "--scenario", "14", "--case", "c2", "--p-grid", "0:1:3", "--format", "json")
        rows = json.loads(out)
        assert len(rows) == 3
        assert all(list(row) == cli.FIELDNAMES for row in rows)
        assert all(not isinstance(v, (dict, list)) for row in rows for v in row.values())

    def test_jobs_same_order(self, capsys):
        argv = ["sweep", "--scenario", "22", "--case", "d2", "--p-grid", "0:1:6", "--w-grid", "0:1:5"]
        _, serial, _ = run(capsys, *argv)
        _, parallel, _ = run(capsys, *argv, "--jobs", "3")
        assert serial == parallel

    def test_fixed_r(self, capsys):
        _, out, _ = run(capsys, "sweep", "--scenario", "14", "--case", "d1", "--p-grid", "0.5:0.5:2",
                        "--w-grid", "0.2:0.2:2", "--r", "0.3")
        rec = cli.records_from_csv(out)[0]
        assert rec.r_used == 0.3
        assert rec.b_value == pytest.approx(pr.protected_expression(BsmScenario.ONE_FOUR, pr.ProtectionCase.WEAK_SINGLE_ARM, 0.5, 0.2, 0.3), abs=1e-12)

    @pytest.mark.parametrize("bell", ["phi+", "phi-", "psi-"])
    def test_bell_choice(self, capsys, bell):
        argv = ["sweep", "--scenario", "13", "--case", "d2", "--p-grid", "0:0.8:3", "--w-grid", "0:0.5:2"]
        _, ref, _ = run(capsys, *argv)
        _, other, _ = run(capsys, *argv, "--bell", bell)
        for a, b in zip(cli.records_from_csv(ref), cli.records_from_csv(other)):
            assert b.b_value == pytest.approx(a.b_value, abs=1e-10)


class TestOptimize:
    def test_two_two(self, capsys):
        code, out, _ = run(capsys, "optimize", "--scenario", "22", "--case", "c1", "--p", "0.3", "--restarts", "8")
        report = json.loads(out)
        assert code == 0
        assert report["best_value"] == pytest.approx(math.sqrt(2 * math.sqrt(0.7)), abs=1e-4)
        assert set(report["best_settings"]) == {"a0", "a1", "c0", "c1", "b0_a", "b0_c", "b1_a", "b1_c"}

    def test_protected_dominates(self, capsys):
        _, out, _ = run(capsys, "optimize", "--scenario", "14", "--case", "d1", "--p", "0.3", "--w", "0.2")
        report = json.loads(out)
        assert report["best_value"] >= pr.closed_form_unprotected(BsmScenario.ONE_FOUR, pr.NoiseCase.SINGLE_ARM, 0.3)
        assert 0.0 < report["best_r"] < 1.0

    def test_reoptimize(self, capsys):
        base = ["optimize", "--scenario", "13", "--case", "d2", "--p", "0.4", "--w", "0.3", "--restarts", "4"]
        _, frozen, _ = run(capsys, *base)
        _, again, _ = run(capsys, *base, "--reoptimize-settings")
        assert json.loads(again)["best_value"] >= json.loads(frozen)["best_value"] - 1e-12

    def test_seed_deterministic(self, capsys):
        argv = ["optimize", "--scenario", "14", "--case", "c1", "--p", "0.2", "--seed", "7", "--restarts", "4"]
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        assert first == second


class TestThreshold:
    def test_value(self, capsys):
        code, out, _ = run(capsys, "threshold", "--scenario", "13", "--case", "c2")
        assert code == 0
        assert float(out) == pytest.approx((5 - math.sqrt(17)) / 4, abs=1e-8)


class TestVerify:
    def test_thresholds_only(self, capsys):
        code, out, _ = run(capsys, "verify", "--only", "thresholds")
        assert code == 0
        assert sum(line.startswith("PASS  thresholds/") for line in out.splitlines()) == 6

    def test_full_run_names_failures(self, capsys):
        code, out, _ = run(capsys, "verify")
        assert code == 1
        failed = out.splitlines()[-1]
        assert failed.startswith("failed: ")
        names = set(failed[len("failed: "):].split(", "))
        # the printed two-decimal TwoTwo vectors and the w=0 identity do not hold
        assert names == {"literal-vectors/22-c1", "literal-vectors/22-c2"} | {
            f"average/w0-identity-{s}-{d}" for s in ("22", "14", "13") for d in ("d1", "d2")
        }

    def test_sign_flip_is_caught(self, capsys, monkeypatch):
        monkeypatch.setitem(bilocality._ONE_THREE_SIGNS, 1, (1, 1, 0))
        code, out, _ = run(capsys, "verify", "--only", "closed-forms")
        assert code == 1
        assert "FAIL  closed-forms/brute-13-c1" in out
        assert "FAIL  closed-forms/brute-13-c2" in out
        assert "PASS  closed-forms/brute-14-c1" in out


class TestConfig:
    def test_file_and_override(self, tmp_path, monkeypatch):
        cfg = tmp_path / "n.cfg"
        cfg.write_text("# defaults\nseed = 5\nrestarts = 3\ntol = 1e-9\n")
        monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
        loaded = cli.load_config()
        assert loaded == {"seed": 5, "restarts": 3, "tol": 1e-9}
        args = cli.build_parser().parse_args(["optimize", "--scenario", "14", "--case", "c1", "--p", "0.1", "--seed", "9"])
        oc = cli.optimizer_config(args, loaded)
        assert (oc.seed, oc.restarts, oc.tol) == (9, 3, 1e-9)

    def test_explicit_path_wins(self, tmp_path, monkeypatch):
        env_cfg, flag_cfg = tmp_path / "env.cfg", tmp_path / "flag.cfg"
        env_cfg.write_text("seed = 1\n")
        flag_cfg.write_text("seed = 2\n")
        monkeypatch.setenv(cli.CONFIG_ENV, str(env_cfg))
        assert cli.load_config(str(flag_cfg)) == {"seed": 2}

    def test_bad_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        code, err = run_usage(capsys, "--config", str(cfg), "threshold", "--scenario", "22", "--case", "c1")
        assert code == 2
        assert "cannot parse" in err

    def test_grid_parser(self):
        assert cli.parse_grid("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
        with pytest.raises(cli.UsageError):
            cli.parse_grid("0:1")
