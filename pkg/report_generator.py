import html
import os

import markdown

# --- Step 1: Module-level Constants ---
VERDICT_LABELS = {
    'validated': '✅ validated',
    'not transferable': '❌ not transferable',   # disturbance estimate left alpha* D
    'not validated': '❌ not validated'          # spec or delta <= rho* failed
}

# Tailwind badge per verdict, same palette as the summary cards
VERDICT_COLOR_CLASSES = {
    'validated': 'bg-green-300',
    'not transferable': 'bg-red-500',
    'not validated': 'bg-amber-300'
}

PLATFORM_TITLES = {
    'space': 'Space platform',
    'underwater': 'Underwater platform'
}
# --- END Step 1 ---


def _fmt(value, digits=4):
    if value is None:
        return 'n/a'
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    if isinstance(value, (list, tuple)):
        return '[' + ', '.join(_fmt(v, digits) for v in value) + ']'
    return str(value)


def _platform_section(name, fragment):
    """
    Markdown block for one platform's validation fragment.

    :param name: 'space' or 'underwater'
    :param fragment: dict produced by harness.validate (plus input_limits)
    :return: Markdown string
    """
    rows = [
        ('Verdict', VERDICT_LABELS.get(fragment['verdict'], fragment['verdict'])),
        ('Spec satisfied on executed trajectory', _fmt(fragment['satisfied'])),
        ('Executed robustness', _fmt(fragment['rho_executed'])),
        ('delta (max deviation)', _fmt(fragment['delta'])),
        ('rho* (planned robustness)', _fmt(fragment['rho_star'])),
        ('delta <= rho*', _fmt(fragment['delta_within_rho'])),
        ('Disturbance estimate contained', _fmt(fragment['containment'])),
        ('Worst containment excess', _fmt(fragment['containment_margin'])),
        ('Bounds alpha* D', _fmt(fragment['bounds'])),
        ('Max abs estimate', _fmt(fragment['max_abs_estimate'])),
        ('Saturation incidents', _fmt(fragment['saturation_incidents'])),
        ('QP failures', _fmt(fragment['qp_failures'])),
        ('Fuel proxy', _fmt(fragment['fuel'])),
        ('Feedback equivalence', _fmt(fragment['feedback_equivalence'])),
    ]
    lines = [f"## {PLATFORM_TITLES.get(name, name)}", '', '| Metric | Value |', '| --- | --- |']
    lines += [f"| {label} | {value} |" for label, value in rows]
    first = fragment.get('first_violation')
    if first:
        lines += ['', f"First containment violation: tick {first['tick']} (t = {_fmt(first['time'])} s), "
                      f"axis {first['axis']}, excess {_fmt(first['excess'])}."]
    return '\n'.join(lines)


def generate_report_markdown(report: dict) -> str:
    """
    Generates the human-readable mission report in Markdown.

    :param report: The report dict built by harness.build_report.
    :return: Markdown text with a summary table per platform.
    """
    transfer = report['transfer']
    lines = [
        f"# Mission report: {report['scenario']}",
        '',
        f"**Verdict:** {VERDICT_LABELS.get(report['verdict'], report['verdict'])}",
        '',
        f"Specification: `{report['spec']}` over dimensions {', '.join(report['dims'])}.",
        '',
        '| Quantity | Value |',
        '| --- | --- |',
        f"| alpha* | {_fmt(report['alpha_star'])} |",
        f"| rho* (space / underwater) | {_fmt(report['rho_star']['space'])} / {_fmt(report['rho_star']['underwater'])} |",
        f"| Planner dt / dt* | {_fmt(transfer['dt_space'])} s / {_fmt(transfer['dt_star'])} s |",
        f"| Duration (space / underwater) | {_fmt(transfer['duration_space'])} s / "
        f"{_fmt(transfer['duration_underwater'])} s |",
        f"| Speedup | {_fmt(transfer['speedup'])} |",
        f"| Seed | {report['seed']} |",
        f"| Injection | {report['injection'].get('profile', 'none')} |",
        '',
    ]
    for name, fragment in report['platforms'].items():
        lines.append(_platform_section(name, fragment))
        lines.append('')
    return '\n'.join(lines)


def generate_report_html(report: dict) -> str:
    """
    Renders the Markdown report into a standalone HTML page.

    :param report: The report dict built by harness.build_report.
    :return: A string containing the full HTML page.
    """
    body = markdown.markdown(generate_report_markdown(report), extensions=['tables'])
    badge = VERDICT_COLOR_CLASSES.get(report['verdict'], 'bg-gray-300')

    # --- Step 2: Page shell ---
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>Mission report - {html.escape(report['scenario'])}</title>
    <link href="https://cdn.jsdelivr.net/npm/tailwindcss@2.2.19/dist/tailwind.min.css" rel="stylesheet">
</head>
<body class="bg-gray-50 text-gray-900">
    <div class="max-w-4xl mx-auto bg-white p-8 rounded-lg shadow-lg mt-10">
        <span class="px-3 py-1 rounded-full text-sm font-semibold {badge}">{html.escape(report['verdict'])}</span>
        {body}
    </div>
</body>
</html>
"""


def write_report(report: dict, outdir: str) -> list:
    """
    Writes report.md and report.html next to the JSON report.

    :return: The written paths.
    """
    md_path = os.path.join(outdir, 'report.md')
    html_path = os.path.join(outdir, 'report.html')
    with open(md_path, 'w', encoding='utf-8') as f:
        f.write(generate_report_markdown(report))
    with open(html_path, 'w', encoding='utf-8') as f:
        f.write(generate_report_html(report))
    return [md_path, html_path]
