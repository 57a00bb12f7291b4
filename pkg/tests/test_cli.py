import json

import pytest
from click.testing import CliRunner
from rich.console import Console

from src.main import main, render_markdown
from src.ui import ReportUI


@pytest.fixture
def runner():
    return CliRunner()


def _report(directory, command):
    with open(directory / f'{command}.json', encoding='utf-8') as handle:
        return json.load(handle)


def test_describe_writes_reports(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'describe', '-i', 'H_10_1'])
    assert result.exit_code == 0, result.output
    assert 'H_10_1' in result.output
    report = _report(tmp_path, 'describe')
    assert report['dimension'] == 10
    assert report['signature'] == [5, 5]
    assert report['shape'] == {'m': 1, 'psi': '0'}
    assert (tmp_path / 'describe.md').read_text().startswith('# describe')


def test_certify_reports_are_deterministic(runner, tmp_path):
    outputs = []
    for run in ('first', 'second'):
        directory = tmp_path / run
        result = runner.invoke(main, ['-q', '--out', str(directory), 'certify', '-i', 'H_10_1', '-k', '1', '-n', '3'])
        assert result.exit_code == 0, result.output
        outputs.append((directory / 'certify.json').read_bytes())
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])
    assert report['passed'] is True
    assert len(report['reports']) == 3


def test_certify_failure_exit_code(runner):
    result = runner.invoke(main, ['certify', '-i', 'H_10_1', '-k', '2'])
    assert result.exit_code == 1
    assert 'PreconditionError' in result.output


def test_classify_symmetric_instance(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'classify', '-i', 'S_10', '--grid=-1:1:3'])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path, 'classify')
    assert report['symmetric'] is True
    assert report['homogeneity_order'] == 'inf'


def test_classify_rejects_bad_grid(runner):
    result = runner.invoke(main, ['classify', '-i', 'S_10', '--grid', 'nonsense'])
    assert result.exit_code == 2


def test_weyl_invariants_vanish(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'weyl', '-i', 'N_10_exp', '-m', '8'])
    assert result.exit_code == 0, result.output
    assert _report(tmp_path, 'weyl')['all_vanish'] is True


def test_missing_instance(runner):
    result = runner.invoke(main, ['describe', '-i', 'missing.json'])
    assert result.exit_code == 2
    assert 'ConfigError' in result.output


def test_invalid_instance_json(runner, tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"p": 1,\n "f": "(+ z0"\n')
    result = runner.invoke(main, ['describe', '-i', str(path)])
    assert result.exit_code == 2
    assert '"line": 3' in result.output


def test_invalid_expression_in_instance(runner, tmp_path):
    path = tmp_path / 'bad_f.json'
    path.write_text('{"p": 1, "f": "(^ z0 -1)"}')
    result = runner.invoke(main, ['describe', '-i', str(path)])
    assert result.exit_code == 2
    assert '"column": 7' in result.output


def test_geodesic_csv_on_stdout(runner):
    result = runner.invoke(main, ['geodesic', '-i', 'H_10_1', '-n', '3'])
    assert result.exit_code == 0, result.output
    lines = result.output.strip().splitlines()
    assert lines[0] == 't,x,z0,z1,zt0,zt1,xs,zs0,zs1,zts0,zts1'
    assert len(lines) == 4
    assert float(lines[1].split(',')[0]) == 0.0
    assert float(lines[-1].split(',')[0]) == 1.0


def test_geodesic_csv_file(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'geodesic', '-i', 'N_10_exp', '-n', '5'])
    assert result.exit_code == 0, result.output
    assert len((tmp_path / 'geodesic.csv').read_text().splitlines()) == 6


def test_curvature_against_oracle(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'curvature', '-i', 'H_10_1', '-k', '1', '--check-oracle'])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path, 'curvature')
    assert report['points'][0]['oracle_difference'] == 0.0


def test_isometry_decision_command(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'isometry', '-i', 'N_10_exp', '--k-max', '4'])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path, 'isometry')
    assert report['consistent'] is True
    assert [row[0] for row in report['alpha']] == [2, 3, 4]


def test_isometry_needs_positive_psi(runner):
    result = runner.invoke(main, ['isometry', '-i', 'H_10_1'])
    assert result.exit_code == 1


def test_verify_all_single_suite(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'verify-all', '--suite', 'symmetric'])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path, 'verify-all')
    assert report['passed'] is True
    assert [s['suite'] for s in report['suites']] == ['symmetric']


def test_verify_all_rejects_large_p(runner):
    result = runner.invoke(main, ['verify-all', '--p', '7', '--suite', 'symmetric'])
    assert result.exit_code == 2


def test_markdown_tables():
    text = render_markdown('certify', {'order': 1, 'reports': [{'passed': True, 'order': 1, 'residuals': {}}]})
    assert '- **order**: 1' in text
    assert '| passed | order |' in text


def test_verify_all_runs_the_instance_suites(runner, tmp_path):
    path = tmp_path / 'cubic.json'
    path.write_text(json.dumps({
        'name': 'cubic', 'p': 1, 'f': '(+ (* z1 (^ z0 2)) (^ z0 3))',
        'points': [[0] * 10, [1, '1/2', -1, 0, 2, 0, 1, 0, 0, 3]],
        'suites': ['weyl'],
    }))
    out = tmp_path / 'out'
    result = runner.invoke(main, ['--out', str(out), 'verify-all', '-i', str(path), '-n', '1', '-m', '4'])
    assert result.exit_code == 0, result.output
    report = _report(out, 'verify-all')
    assert report['instance'] == 'cubic'
    assert report['p'] == [1]
    assert [s['suite'] for s in report['suites']] == ['weyl']
    # four corpus functions at one point, the instance at its two points, the sphere control
    assert report['suites'][0]['checks'] == 7


def test_verify_all_suite_flag_overrides_instance(runner, tmp_path):
    result = runner.invoke(main, ['--out', str(tmp_path), 'verify-all', '-i', 'N_10_exp', '--suite', 'symmetric'])
    assert result.exit_code == 0, result.output
    assert [s['suite'] for s in _report(tmp_path, 'verify-all')['suites']] == ['symmetric']


def test_suite_table_lists_failures():
    ui = ReportUI(console=Console(record=True, width=120))
    ui.show_suites([
        {'suite': 'weyl', 'passed': True, 'checks': 3, 'failures': []},
        {'suite': 'alpha', 'passed': False, 'checks': 2,
         'failures': [{'label': 'p=1 triple 0 alpha^2', 'passed': False, 'detail': 'direct 1 via theta 2'}]},
    ])
    ui.show_failure("acceptance suites failed")
    text = ui.console.export_text()
    assert 'weyl' in text and 'alpha' in text
    assert 'p=1 triple 0 alpha^2' in text
    assert 'acceptance suites failed' in text
