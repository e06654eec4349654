#include "maestrino_rt.h"

#include <errno.h>
#include <float.h>
#include <math.h>
#include <stdarg.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static char last_error[1024];

const char *mrt_last_error(void) { return last_error; }

void mrt_set_error(const char *fmt, ...)
{
    va_list ap;
    va_start(ap, fmt);
    vsnprintf(last_error, sizeof last_error, fmt, ap);
    va_end(ap);
}

static const char *state_name(int state)
{
    switch (state) {
    case MRT_INSTANTIATED: return "instantiated";
    case MRT_INITIALIZED: return "initialized";
    case MRT_STEPPING: return "stepping";
    default: return "terminated";
    }
}

/* ---- FMI-lite instances ------------------------------------------------ */

int mrt_instantiate(mrt_instance *inst, const mrt_model *model,
                    const char *name, const double *defaults)
{
    int i;
    if (model->n_vars > MRT_MAX_VARS) {
        mrt_set_error("%s: model %s has too many variables", name, model->model_name);
        return -1;
    }
    inst->model = model;
    inst->name = name;
    for (i = 0; i < model->n_vars; i++)
        inst->values[i] = defaults[i];
    inst->state = MRT_INSTANTIATED;
    inst->time = 0.0;
    return 0;
}

static int check_vr(const mrt_instance *inst, int vr)
{
    if (vr < 0 || vr >= inst->model->n_vars) {
        mrt_set_error("%s: unknown value reference %d", inst->name, vr);
        return -1;
    }
    return 0;
}

int mrt_set_real(mrt_instance *inst, int vr, double v)
{
    int kind;
    if (check_vr(inst, vr))
        return -1;
    if (inst->state == MRT_TERMINATED) {
        mrt_set_error("%s: `set` not allowed in state terminated", inst->name);
        return -1;
    }
    kind = inst->model->kinds[vr];
    if (kind == MRT_OUTPUT || kind == MRT_LOCAL) {
        mrt_set_error("%s: value reference %d cannot be set", inst->name, vr);
        return -1;
    }
    if (kind == MRT_PARAMETER && inst->state == MRT_STEPPING) {
        mrt_set_error("%s: `set parameter` not allowed in state stepping", inst->name);
        return -1;
    }
    if (inst->model->is_boolean[vr])
        v = v != 0.0 ? 1.0 : 0.0;
    inst->values[vr] = v;
    return 0;
}

int mrt_get_real(const mrt_instance *inst, int vr, double *out)
{
    if (check_vr(inst, vr))
        return -1;
    if (inst->state == MRT_TERMINATED) {
        mrt_set_error("%s: `get` not allowed in state terminated", inst->name);
        return -1;
    }
    *out = inst->values[vr];
    return 0;
}

int mrt_initialize(mrt_instance *inst, double start_time)
{
    if (inst->state != MRT_INSTANTIATED) {
        mrt_set_error("%s: `initialize` not allowed in state %s", inst->name,
                      state_name(inst->state));
        return -1;
    }
    if (inst->model->initialize)
        inst->model->initialize(inst->values);
    inst->time = start_time;
    inst->state = MRT_INITIALIZED;
    return 0;
}

int mrt_do_step(mrt_instance *inst, double t, double h)
{
    double tol;
    if (inst->state != MRT_INITIALIZED && inst->state != MRT_STEPPING) {
        mrt_set_error("%s: `do_step` not allowed in state %s", inst->name,
                      state_name(inst->state));
        return -1;
    }
    if (!(h > 0.0) || !isfinite(h)) {
        mrt_set_error("%s: step size must be positive and finite, got %g", inst->name, h);
        return -1;
    }
    tol = 4.0 * DBL_EPSILON * fabs(t);
    if (tol < 1e-12)
        tol = 1e-12;
    if (fabs(t - inst->time) > tol) {
        mrt_set_error("%s: step starts at t=%.17g but instance is at t=%.17g",
                      inst->name, t, inst->time);
        return -1;
    }
    inst->model->step(inst->values, h);
    inst->time = t + h;
    inst->state = MRT_STEPPING;
    return 0;
}

int mrt_terminate(mrt_instance *inst)
{
    if (inst->state == MRT_TERMINATED) {
        mrt_set_error("%s: `terminate` not allowed in state terminated", inst->name);
        return -1;
    }
    inst->state = MRT_TERMINATED;
    return 0;
}

unsigned long long mrt_step_count(double start, double end, double h)
{
    double ratio = (end - start) / h;
    if (isnan(ratio) || ratio <= 0.0)
        return 0;
    return (unsigned long long)round(ratio);
}

/* ---- runtime file reader ----------------------------------------------- */

/* Reads only the flat schema written by the primary tool:
 * {"DataWriter": [{"filename": s, "type": "CSV"}, ...],
 *  "endTime": n, "environment_variables": {k: n, ...}} */

typedef struct reader {
    const char *p;
    int line;
} reader;

static void skip_ws(reader *r)
{
    for (;;) {
        char c = *r->p;
        if (c == '\n') {
            r->line++;
            r->p++;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            r->p++;
        } else {
            return;
        }
    }
}

static int fail(reader *r, const char *what)
{
    mrt_set_error("runtime file line %d: %s", r->line, what);
    return -1;
}

static int expect(reader *r, char c)
{
    char msg[64];
    skip_ws(r);
    if (*r->p != c) {
        snprintf(msg, sizeof msg, "expected '%c'", c);
        return fail(r, msg);
    }
    r->p++;
    return 0;
}

static int read_string(reader *r, char *out, size_t cap)
{
    size_t n = 0;
    skip_ws(r);
    if (*r->p != '"')
        return fail(r, "expected string");
    r->p++;
    for (;;) {
        char c = *r->p++;
        if (c == '\0' || c == '\n')
            return fail(r, "unterminated string");
        if (c == '"')
            break;
        if (c == '\\') {
            char e = *r->p++;
            switch (e) {
            case '"': c = '"'; break;
            case '\\': c = '\\'; break;
            case '/': c = '/'; break;
            case 'b': c = '\b'; break;
            case 'f': c = '\f'; break;
            case 'n': c = '\n'; break;
            case 'r': c = '\r'; break;
            case 't': c = '\t'; break;
            case 'u': {
                unsigned code = 0;
                int i;
                for (i = 0; i < 4; i++) {
                    char h = *r->p++;
                    code <<= 4;
                    if (h >= '0' && h <= '9') code |= (unsigned)(h - '0');
                    else if (h >= 'a' && h <= 'f') code |= (unsigned)(h - 'a' + 10);
                    else if (h >= 'A' && h <= 'F') code |= (unsigned)(h - 'A' + 10);
                    else return fail(r, "bad \\u escape");
                }
                if (code == 0 || code > 0x7f)
                    return fail(r, "only ASCII \\u escapes are supported");
                c = (char)code;
                break;
            }
            default:
                return fail(r, "bad escape");
            }
        }
        if (n + 1 >= cap)
            return fail(r, "string too long");
        out[n++] = c;
    }
    out[n] = '\0';
    return 0;
}

static int read_number(reader *r, double *out)
{
    const char *start;
    char *end;
    skip_ws(r);
    start = r->p;
    if (*r->p == '-')
        r->p++;
    if (*r->p < '0' || *r->p > '9')
        return fail(r, "expected number");
    while ((*r->p >= '0' && *r->p <= '9') || *r->p == '.' || *r->p == 'e' ||
           *r->p == 'E' || *r->p == '+' || *r->p == '-')
        r->p++;
    *out = strtod(start, &end);
    if (end != r->p || !isfinite(*out))
        return fail(r, "malformed number");
    return 0;
}

/* Calls `member` for each key of an object, rejecting duplicates. */
typedef int (*member_fn)(reader *r, const char *key, void *ctx);

static int read_object(reader *r, member_fn member, void *ctx, char (*seen)[MRT_KEY_LEN],
                       int max_seen)
{
    int n_seen = 0, i;
    char key[MRT_KEY_LEN];
    if (expect(r, '{'))
        return -1;
    skip_ws(r);
    if (*r->p == '}') {
        r->p++;
        return 0;
    }
    for (;;) {
        if (read_string(r, key, sizeof key))
            return -1;
        for (i = 0; i < n_seen; i++) {
            if (strcmp(seen[i], key) == 0) {
                char msg[MRT_KEY_LEN + 32];
                snprintf(msg, sizeof msg, "duplicate key \"%s\"", key);
                return fail(r, msg);
            }
        }
        if (n_seen >= max_seen)
            return fail(r, "too many keys");
        strcpy(seen[n_seen++], key);
        if (expect(r, ':'))
            return -1;
        if (member(r, key, ctx))
            return -1;
        skip_ws(r);
        if (*r->p == ',') {
            r->p++;
            continue;
        }
        return expect(r, '}');
    }
}

static int env_member(reader *r, const char *key, void *ctx)
{
    mrt_config *cfg = ctx;
    mrt_param *p;
    if (cfg->n_params >= MRT_MAX_PARAMS)
        return fail(r, "too many environment variables");
    p = &cfg->params[cfg->n_params];
    strcpy(p->key, key);
    p->used = 0;
    if (read_number(r, &p->value))
        return -1;
    cfg->n_params++;
    return 0;
}

typedef struct writer_ctx {
    char filename[MRT_PATH_LEN];
    int has_filename;
    int has_type;
} writer_ctx;

static int writer_member(reader *r, const char *key, void *ctx)
{
    writer_ctx *w = ctx;
    char type[16];
    if (strcmp(key, "filename") == 0) {
        w->has_filename = 1;
        return read_string(r, w->filename, sizeof w->filename);
    }
    if (strcmp(key, "type") == 0) {
        if (read_string(r, type, sizeof type))
            return -1;
        if (strcmp(type, "CSV") != 0)
            return fail(r, "unsupported DataWriter type");
        w->has_type = 1;
        return 0;
    }
    {
        char msg[MRT_KEY_LEN + 32];
        snprintf(msg, sizeof msg, "unknown key \"%s\" in DataWriter", key);
        return fail(r, msg);
    }
}

static char small_seen[4][MRT_KEY_LEN];

static int read_writers(reader *r, mrt_config *cfg)
{
    if (expect(r, '['))
        return -1;
    skip_ws(r);
    if (*r->p == ']') {
        r->p++;
        return 0;
    }
    for (;;) {
        writer_ctx w;
        memset(&w, 0, sizeof w);
        if (read_object(r, writer_member, &w, small_seen, 4))
            return -1;
        if (!w.has_filename || !w.has_type)
            return fail(r, "DataWriter needs \"filename\" and \"type\"");
        if (cfg->n_outputs >= MRT_MAX_WRITERS)
            return fail(r, "too many DataWriter entries");
        strcpy(cfg->outputs[cfg->n_outputs++], w.filename);
        skip_ws(r);
        if (*r->p == ',') {
            r->p++;
            continue;
        }
        return expect(r, ']');
    }
}

static char env_seen[MRT_MAX_PARAMS][MRT_KEY_LEN];

static int top_member(reader *r, const char *key, void *ctx)
{
    mrt_config *cfg = ctx;
    if (strcmp(key, "environment_variables") == 0)
        return read_object(r, env_member, cfg, env_seen, MRT_MAX_PARAMS);
    if (strcmp(key, "DataWriter") == 0)
        return read_writers(r, cfg);
    if (strcmp(key, "endTime") == 0) {
        cfg->has_end_time = 1;
        return read_number(r, &cfg->end_time);
    }
    {
        char msg[MRT_KEY_LEN + 32];
        snprintf(msg, sizeof msg, "unknown key \"%s\"", key);
        return fail(r, msg);
    }
}

static char top_seen[4][MRT_KEY_LEN];

int mrt_parse_config(const char *text, mrt_config *cfg)
{
    reader r;
    r.p = text;
    r.line = 1;
    memset(cfg, 0, sizeof *cfg);
    skip_ws(&r);
    if (*r.p == '\0')
        return fail(&r, "empty document");
    if (read_object(&r, top_member, cfg, top_seen, 4))
        return -1;
    skip_ws(&r);
    if (*r.p != '\0')
        return fail(&r, "trailing characters");
    if (cfg->n_outputs == 0)
        return fail(&r, "no DataWriter declared");
    return 0;
}

int mrt_load_config(const char *path, mrt_config *cfg)
{
    FILE *f = fopen(path, "rb");
    char *text;
    long len;
    int rc;
    if (!f) {
        mrt_set_error("cannot open runtime file %s: %s", path, strerror(errno));
        return -1;
    }
    fseek(f, 0, SEEK_END);
    len = ftell(f);
    fseek(f, 0, SEEK_SET);
    if (len < 0) {
        fclose(f);
        mrt_set_error("cannot read runtime file %s", path);
        return -1;
    }
    text = malloc((size_t)len + 1);
    if (!text) {
        fclose(f);
        mrt_set_error("out of memory");
        return -1;
    }
    if (fread(text, 1, (size_t)len, f) != (size_t)len) {
        free(text);
        fclose(f);
        mrt_set_error("cannot read runtime file %s", path);
        return -1;
    }
    fclose(f);
    text[len] = '\0';
    if (strlen(text) != (size_t)len) {
        free(text);
        mrt_set_error("runtime file %s contains NUL bytes", path);
        return -1;
    }
    rc = mrt_parse_config(text, cfg);
    free(text);
    return rc;
}

int mrt_config_find(const mrt_config *cfg, const char *key)
{
    int i;
    for (i = 0; i < cfg->n_params; i++)
        if (strcmp(cfg->params[i].key, key) == 0)
            return i;
    return -1;
}

/* ---- shortest round-trip formatting ------------------------------------ */

/* Splits "%.*e" output into significant digits and a decimal exponent. */
static int sci_digits(double v, int prec, char *digits, int *exp10)
{
    char tmp[40];
    char *p, *e;
    int n = 0;
    snprintf(tmp, sizeof tmp, "%.*e", prec, v);
    p = tmp;
    if (*p == '-')
        p++;
    e = strchr(p, 'e');
    for (; p < e; p++)
        if (*p != '.')
            digits[n++] = *p;
    digits[n] = '\0';
    *exp10 = atoi(e + 1);
    return n;
}

static double digits_value(const char *digits, int exp10, int negative)
{
    char tmp[48];
    snprintf(tmp, sizeof tmp, "%s0.%se%d", negative ? "-" : "", digits, exp10 + 1);
    return strtod(tmp, NULL);
}

/* Adds `delta` (+1 or -1) to the decimal digit string in place. Returns 0 if
 * the result keeps the same number of digits without a leading zero. */
static int bump(char *digits, int n, int delta)
{
    int i = n - 1;
    if (delta > 0) {
        while (i >= 0 && digits[i] == '9')
            digits[i--] = '0';
        if (i < 0)
            return -1;
        digits[i]++;
    } else {
        while (i >= 0 && digits[i] == '0')
            digits[i--] = '9';
        if (i < 0)
            return -1;
        digits[i]--;
        if (digits[0] == '0')
            return -1;
    }
    return 0;
}

/* Whether |v| lies exactly halfway between two prec-digit decimals, i.e. its
 * exact expansion has prec + 1 significant digits ending in 5. */
static int is_tie(double v, int prec, int exp10)
{
    static char exact[800];
    char *p;
    int i, e;
    double m = frexp(fabs(v), &e);
    /* v = m * 2^e with m an odd integer; for e < 0 the exact expansion has
     * exp10 - e + 1 significant digits, so most candidates are rejected
     * without expanding them */
    m = ldexp(m, 53);
    e -= 53;
    while (fmod(m, 2.0) == 0.0) {
        m /= 2.0;
        e++;
    }
    if (e < 0 && exp10 - e != prec)
        return 0;
    /* 767 digits are enough for any double */
    snprintf(exact, sizeof exact, "%.770e", fabs(v));
    p = exact + 2;
    if (prec < 1 || p[prec - 1] != '5')
        return 0;
    for (i = prec; p[i] != 'e'; i++)
        if (p[i] != '0')
            return 0;
    return 1;
}

/* Finds the shortest digit string that parses back to v (closest to v on a
 * tie in length, and the one of larger magnitude when v is exactly
 * halfway). */
static int shortest_digits(double v, char *digits, int *exp10, int min_prec)
{
    int prec, n, negative = signbit(v) != 0;
    for (prec = min_prec; prec <= 17; prec++) {
        char best[24] = "";
        int best_exp = 0;
        long double best_dist = 0;
        int delta;
        char wider[24];
        int wider_exp;
        if (sci_digits(v, prec, wider, &wider_exp) == prec + 1 && wider[prec] == '5'
            && is_tie(v, prec, wider_exp)) {
            char down[24];
            memcpy(down, wider, (size_t)prec);
            down[prec] = '\0';
            strcpy(digits, down);
            *exp10 = wider_exp;
            if (bump(digits, prec, 1)) {
                /* 99..95 rounds up to 100..0 */
                memset(digits, '0', (size_t)prec);
                digits[0] = '1';
                digits[prec] = '\0';
                *exp10 = wider_exp + 1;
            }
            if (digits_value(digits, *exp10, negative) == v)
                return prec;
            strcpy(digits, down);
            *exp10 = wider_exp;
            if (digits_value(digits, *exp10, negative) == v)
                return prec;
        }
        n = sci_digits(v, prec - 1, digits, exp10);
        if (digits_value(digits, *exp10, negative) == v)
            return n;
        if (prec == 17)
            break;
        for (delta = -1; delta <= 1; delta += 2) {
            char cand[24];
            strcpy(cand, digits);
            if (bump(cand, n, delta))
                continue;
            if (digits_value(cand, *exp10, negative) == v) {
                long double dist;
                char tmp[48];
                snprintf(tmp, sizeof tmp, "%s0.%se%d", negative ? "-" : "", cand, *exp10 + 1);
                dist = fabsl(strtold(tmp, NULL) - (long double)v);
                if (best[0] == '\0' || dist < best_dist) {
                    strcpy(best, cand);
                    best_exp = *exp10;
                    best_dist = dist;
                }
            }
        }
        if (best[0] != '\0') {
            strcpy(digits, best);
            *exp10 = best_exp;
            return n;
        }
    }
    return n;
}

int mrt_format_real(double v, char *buf)
{
    char digits[24];
    int n, exp10, len = 0, i;
    if (!isfinite(v))
        return -1;
    if (v == 0.0) {
        strcpy(buf, signbit(v) ? "-0.0" : "0.0");
        return (int)strlen(buf);
    }
    if (fabs(v) >= DBL_MIN) {
        /* Any decimal of at most 15 significant digits that round-trips pads
         * out to the correctly rounded 15-digit form, so trimming that form
         * gives the shortest representation whenever it round-trips. */
        n = sci_digits(v, 14, digits, &exp10);
        if (digits_value(digits, exp10, signbit(v) != 0) == v) {
            while (n > 1 && digits[n - 1] == '0')
                digits[--n] = '\0';
        } else {
            n = shortest_digits(v, digits, &exp10, 16);
        }
    } else {
        n = shortest_digits(v, digits, &exp10, 1);
    }
    while (n > 1 && digits[n - 1] == '0')
        digits[--n] = '\0';

    if (signbit(v))
        buf[len++] = '-';
    if (exp10 < -4 || exp10 >= 16) {
        buf[len++] = digits[0];
        if (n > 1) {
            buf[len++] = '.';
            for (i = 1; i < n; i++)
                buf[len++] = digits[i];
        }
        len += sprintf(buf + len, "e%d", exp10);
    } else if (exp10 < 0) {
        buf[len++] = '0';
        buf[len++] = '.';
        for (i = 0; i < -exp10 - 1; i++)
            buf[len++] = '0';
        for (i = 0; i < n; i++)
            buf[len++] = digits[i];
        buf[len] = '\0';
    } else {
        for (i = 0; i <= exp10; i++)
            buf[len++] = i < n ? digits[i] : '0';
        buf[len++] = '.';
        if (n > exp10 + 1) {
            for (i = exp10 + 1; i < n; i++)
                buf[len++] = digits[i];
        } else {
            buf[len++] = '0';
        }
        buf[len] = '\0';
    }
    return len;
}

/* ---- CSV output -------------------------------------------------------- */

int mrt_writer_open(mrt_writer *w, const mrt_config *cfg, const char *header)
{
    int i;
    w->n_files = 0;
    for (i = 0; i < cfg->n_outputs; i++) {
        FILE *f = fopen(cfg->outputs[i], "wb");
        if (!f) {
            mrt_set_error("cannot write %s: %s", cfg->outputs[i], strerror(errno));
            mrt_writer_close(w);
            return -1;
        }
        setvbuf(f, NULL, _IOFBF, 1 << 16);
        w->files[w->n_files++] = f;
        fputs(header, f);
        fputc('\n', f);
    }
    return 0;
}

int mrt_writer_row(mrt_writer *w, const double *row, int n)
{
    char line[64 * MRT_MAX_VARS * 4];
    size_t len = 0;
    int i;
    for (i = 0; i < n; i++) {
        int k;
        if (len + 40 >= sizeof line) {
            mrt_set_error("row too wide");
            return -1;
        }
        if (i > 0)
            line[len++] = ',';
        k = mrt_format_real(row[i], line + len);
        if (k < 0) {
            mrt_set_error("non-finite value in column %d", i);
            return -1;
        }
        len += (size_t)k;
    }
    line[len++] = '\n';
    for (i = 0; i < w->n_files; i++) {
        if (fwrite(line, 1, len, (FILE *)w->files[i]) != len) {
            mrt_set_error("write failed");
            return -1;
        }
    }
    return 0;
}

int mrt_writer_close(mrt_writer *w)
{
    int i, rc = 0;
    for (i = 0; i < w->n_files; i++)
        if (fclose((FILE *)w->files[i]) != 0)
            rc = -1;
    w->n_files = 0;
    if (rc)
        mrt_set_error("closing output failed");
    return rc;
}
