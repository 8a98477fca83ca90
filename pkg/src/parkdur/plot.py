"""Feature plots for LIME explanations: monospace text or a small SVG.
Both renderings are pure functions of the explanation dicts, so fixed
inputs give identical bytes."""

from html import escape

BAR = 20


def _bar(weight, scale):
    n = int(round(BAR * abs(weight) / scale)) if scale > 0 else 0
    if weight < 0:
        return " " * (BAR - n) + "#" * n + "|" + " " * BAR
    return " " * BAR + "|" + "#" * n + " " * (BAR - n)


def render_text(explanations) -> str:
    """One block per case; bars right of the axis support the label, bars
    to the left contradict it."""
    out = []
    for e in explanations:
        if "error" in e:
            out.append(f"Case: {e['case']}  error: {e['error']}\n")
            continue
        head = (f"Case: {e['case']}  Label: {e['label']}  "
                f"Probability: {e['probability']:.2f}  "
                f"Explanation Fit: {e['explanation_fit']:.2f}")
        if e.get("observed") is not None:
            head += f"  Observed: {e['observed']}"
        lines = [head]
        feats = e["features"]
        if feats:
            scale = max(abs(f["weight"]) for f in feats)
            width = max(len(f["condition"]) for f in feats)
            for f in feats:
                lines.append(f"  {f['condition']:<{width}} {_bar(f['weight'], scale)} {f['weight']:+.3f}")
        out.append("\n".join(lines) + "\n")
    return "\n".join(out)


def render_svg(explanations) -> str:
    row_h, pad, label_w, half = 18, 10, 260, 160
    width = label_w + 2 * half + 80
    y = pad
    body = []
    for e in explanations:
        if "error" in e:
            body.append(f'<text x="{pad}" y="{y + 12}" font-weight="bold">'
                        f'Case {escape(str(e["case"]))}: {escape(e["error"])}</text>')
            y += row_h + pad
            continue
        title = (f"Case: {e['case']} | Label: {e['label']} | "
                 f"Probability: {e['probability']:.2f} | "
                 f"Explanation Fit: {e['explanation_fit']:.2f}")
        body.append(f'<text x="{pad}" y="{y + 12}" font-weight="bold">{escape(title)}</text>')
        y += row_h
        feats = e["features"]
        scale = max((abs(f["weight"]) for f in feats), default=0.0)
        axis = label_w + half
        top = y
        for f in feats:
            w = half * abs(f["weight"]) / scale if scale > 0 else 0.0
            x0 = axis - w if f["weight"] < 0 else axis
            colour = "#b2182b" if f["weight"] < 0 else "#2166ac"
            body.append(f'<text x="{pad}" y="{y + 13}">{escape(f["condition"])}</text>')
            body.append(f'<rect x="{x0:.2f}" y="{y + 3}" width="{w:.2f}" height="{row_h - 6}" fill="{colour}"/>')
            body.append(f'<text x="{axis + half + 6}" y="{y + 13}">{f["weight"]:+.3f}</text>')
            y += row_h
        body.append(f'<line x1="{axis}" y1="{top}" x2="{axis}" y2="{y}" stroke="black"/>')
        y += pad
    height = y + pad
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'font-family="monospace" font-size="12">\n' + "\n".join(body) + "\n</svg>\n")
