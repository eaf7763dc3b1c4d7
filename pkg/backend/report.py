"""Report emitters: CSV/JSON tables and plotly HTML figures for evaluation
reports, training calibration series and case-study traces."""
from typing import Any, Dict, List, Sequence
import json
import logging
import os

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from harness import StatReport
from scm import FACTORS

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json', 'html')

HEADLINE_COLUMNS = ['deck', 'agent', 'win_rate', 'ci_lo', 'ci_hi', 'n_s', 'delta', 'p_boot', 'p_holm']
TRANSFER_COLUMNS = ['agent', 'in_dist', 'held_out', 'delta', 'delta_fold_mean', 'n_s', 'p_boot', 'p_holm']
ABLATION_COLUMNS = ['variant', 'win_rate', 'ci_lo', 'ci_hi', 'n_s', 'delta', 'p_boot', 'p_holm']
_COLUMN_ORDER = {'headline': HEADLINE_COLUMNS, 'transfer': TRANSFER_COLUMNS, 'ablation': ABLATION_COLUMNS}


def _ordered(name: str, table: pd.DataFrame) -> pd.DataFrame:
    cols = _COLUMN_ORDER.get(name)
    if not cols:
        return table
    return table[[c for c in cols if c in table.columns] + [c for c in table.columns if c not in cols]]


def matchup_heatmap(rates: pd.DataFrame, agent: str) -> pd.DataFrame:
    """deck × opponent mean win rate for one agent."""
    sub = rates[rates['agent'] == agent]
    return sub.pivot_table(index='deck', columns='opponent', values='win_rate', aggfunc='mean')


def calibration_series(metrics: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    """Per-update correlation, credit share and gate statistics, one row per update."""
    rows = []
    for m in metrics:
        row = {'update': m['update'], 'steps': m.get('steps'),
               'gate_mean': m['gate_mean'], 'gate_min': m['gate_min'], 'gate_max': m['gate_max']}
        for f in FACTORS:
            row[f'correlation.{f}'] = m['correlation'][f]
            row[f'credit_share.{f}'] = m['credit_share'][f]
        rows.append(row)
    return pd.DataFrame(rows)


def calibration_figure(series: pd.DataFrame) -> go.Figure:
    fig = make_subplots(rows=1, cols=3, subplot_titles=('Per-factor correlation', 'Credit share', 'Gate g(s)'))
    for f in FACTORS:
        fig.add_trace(go.Scatter(x=series['update'], y=series[f'correlation.{f}'], mode='lines', name=f,
                                 legendgroup=f), row=1, col=1)
        fig.add_trace(go.Scatter(x=series['update'], y=series[f'credit_share.{f}'], mode='lines', name=f,
                                 stackgroup='share', legendgroup=f, showlegend=False), row=1, col=2)
    fig.add_trace(go.Scatter(x=series['update'], y=series['gate_max'], mode='lines', line=dict(width=0),
                             showlegend=False), row=1, col=3)
    fig.add_trace(go.Scatter(x=series['update'], y=series['gate_min'], mode='lines', line=dict(width=0),
                             fill='tonexty', name='gate min/max'), row=1, col=3)
    fig.add_trace(go.Scatter(x=series['update'], y=series['gate_mean'], mode='lines',
                             line=dict(color='#ff7f0e', width=3), name='gate mean'), row=1, col=3)
    fig.update_layout(title='Factor calibration over training', height=420, template='plotly_white')
    return fig


def case_study_figure(trace: pd.DataFrame) -> go.Figure:
    fig = make_subplots(rows=1, cols=3, subplot_titles=('V_k', 'A_k', 'ε_k'))
    for col, prefix in enumerate(('V', 'A', 'eps'), start=1):
        for f in FACTORS:
            fig.add_trace(go.Scatter(x=trace['turn'], y=trace[f'{prefix}.{f}'], mode='lines+markers', name=f,
                                     legendgroup=f, showlegend=col == 1), row=1, col=col)
    fig.update_layout(title='Case study: per-turn factor values, advantages and SCM effects',
                      xaxis_title='Turn', height=420, template='plotly_white')
    return fig


def _table_figure(name: str, table: pd.DataFrame) -> go.Figure:
    shown = table.round(4)
    fig = go.Figure(go.Table(header=dict(values=list(shown.columns)),
                             cells=dict(values=[shown[c].tolist() for c in shown.columns])))
    fig.update_layout(title=name, template='plotly_white')
    return fig


def write_report(report: StatReport, out_dir: str, formats: Sequence[str] = FORMATS) -> List[str]:
    """Write every table of `report`; returns the written paths."""
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f'Unknown report format(s) {unknown}. Expected some of {list(FORMATS)}')
    if report.empty:
        raise ValueError(f'{report.kind} report has no rows')
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, table in report.tables.items():
        table = _ordered(name, table)
        stem = os.path.join(out_dir, f'{report.kind}_{name}')
        if 'csv' in formats:
            table.to_csv(stem + '.csv', index=False)
            paths.append(stem + '.csv')
        if 'json' in formats:
            table.to_json(stem + '.json', orient='records', indent=2)
            paths.append(stem + '.json')
        if 'html' in formats:
            _table_figure(f'{report.kind}: {name}', table).write_html(stem + '.html', include_plotlyjs='cdn')
            paths.append(stem + '.html')
    meta_path = os.path.join(out_dir, f'{report.kind}_meta.json')
    with open(meta_path, 'w', encoding='utf-8') as f:
        json.dump({'kind': report.kind, 'families': report.families, 'meta': report.meta}, f, indent=2, default=str)
    paths.append(meta_path)
    logger.info('report written kind=%s files=%d dir=%s', report.kind, len(paths), out_dir)
    return paths


def write_calibration(metrics: Sequence[Dict[str, Any]], out_dir: str, stem: str = 'calibration') -> List[str]:
    if not metrics:
        raise ValueError('no training metrics to report')
    os.makedirs(out_dir, exist_ok=True)
    series = calibration_series(metrics)
    csv_path = os.path.join(out_dir, f'{stem}.csv')
    html_path = os.path.join(out_dir, f'{stem}.html')
    series.to_csv(csv_path, index=False)
    calibration_figure(series).write_html(html_path, include_plotlyjs='cdn')
    return [csv_path, html_path]


def write_case_study(trace: pd.DataFrame, out_dir: str, stem: str = 'case_study') -> List[str]:
    if trace.empty:
        raise ValueError('empty case-study trace')
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f'{stem}.csv')
    html_path = os.path.join(out_dir, f'{stem}.html')
    trace.to_csv(csv_path, index=False)
    case_study_figure(trace).write_html(html_path, include_plotlyjs='cdn')
    return [csv_path, html_path]
