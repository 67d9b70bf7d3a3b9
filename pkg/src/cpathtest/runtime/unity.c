#include "unity.h"

#include <inttypes.h>
#include <math.h>
#include <stdio.h>
#include <string.h>

struct UnityState Unity;

static void unity_report_failure(int line, const char *detail, const char *msg)
{
    Unity.current_failed = 1;
    printf("%s:%d:%s:FAIL", Unity.file, line, Unity.current_test);
    if (detail != NULL && detail[0] != '\0') {
        printf(": %s", detail);
    }
    if (msg != NULL) {
        printf(": %s", msg);
    }
    printf("\n");
    fflush(stdout);
    longjmp(Unity.abort_frame, 1);
}

void UnityBegin(const char *filename)
{
    memset(&Unity, 0, sizeof(Unity));
    Unity.file = filename;
}

int UnityEnd(void)
{
    printf("\n-----------------------\n");
    printf("%d Tests %d Failures %d Ignored\n", Unity.tests, Unity.failures, Unity.ignored);
    printf("%s\n", Unity.failures == 0 ? "OK" : "FAIL");
    fflush(stdout);
    return Unity.failures;
}

void UnityDefaultTestRun(UnityTestFunction func, const char *name, int line)
{
    Unity.current_test = name;
    Unity.current_line = line;
    Unity.current_failed = 0;
    Unity.current_ignored = 0;
    Unity.tests++;
    if (setjmp(Unity.abort_frame) == 0) {
        setUp();
        func();
    }
    if (setjmp(Unity.abort_frame) == 0) {
        tearDown();
    }
    if (Unity.current_failed) {
        Unity.failures++;
    } else if (Unity.current_ignored) {
        Unity.ignored++;
        printf("%s:%d:%s:IGNORE\n", Unity.file, line, name);
    } else {
        printf("%s:%d:%s:PASS\n", Unity.file, line, name);
    }
    fflush(stdout);
}

void UnityFail(const char *msg, int line)
{
    unity_report_failure(line, NULL, msg);
}

void UnityIgnore(const char *msg, int line)
{
    (void)line;
    Unity.current_ignored = 1;
    if (msg != NULL) {
        printf("%s:%d:%s:IGNORE: %s\n", Unity.file, line, Unity.current_test, msg);
    }
    longjmp(Unity.abort_frame, 1);
}

void UnityMessage(const char *msg, int line)
{
    printf("%s:%d:%s:INFO: %s\n", Unity.file, line, Unity.current_test, msg);
}

void UnityAssertBool(int condition, const char *what, const char *msg, int line)
{
    char buf[256];
    if (condition) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %s", what);
    unity_report_failure(line, buf, msg);
}

void UnityAssertEqualInt(intmax_t expected, intmax_t actual, const char *msg, int line)
{
    char buf[128];
    if (expected == actual) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %" PRIdMAX " Was %" PRIdMAX, expected, actual);
    unity_report_failure(line, buf, msg);
}

void UnityAssertEqualUInt(uintmax_t expected, uintmax_t actual, int hex, const char *msg, int line)
{
    char buf[128];
    if (expected == actual) {
        return;
    }
    if (hex) {
        snprintf(buf, sizeof(buf), "Expected 0x%" PRIXMAX " Was 0x%" PRIXMAX, expected, actual);
    } else {
        snprintf(buf, sizeof(buf), "Expected %" PRIuMAX " Was %" PRIuMAX, expected, actual);
    }
    unity_report_failure(line, buf, msg);
}

void UnityAssertNotEqualInt(intmax_t expected, intmax_t actual, const char *msg, int line)
{
    char buf[128];
    if (expected != actual) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected Not-Equal %" PRIdMAX " Was %" PRIdMAX, expected, actual);
    unity_report_failure(line, buf, msg);
}

static const char *const unity_cmp_names[] = {"greater than", "less than", "greater or equal to", "less or equal to"};

void UnityAssertCompareInt(intmax_t threshold, intmax_t actual, int op, const char *msg, int line)
{
    char buf[128];
    int ok = (op == UNITY_CMP_GT && actual > threshold) || (op == UNITY_CMP_LT && actual < threshold) ||
             (op == UNITY_CMP_GE && actual >= threshold) || (op == UNITY_CMP_LE && actual <= threshold);
    if (ok) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %s %" PRIdMAX " Was %" PRIdMAX, unity_cmp_names[op], threshold, actual);
    unity_report_failure(line, buf, msg);
}

void UnityAssertCompareUInt(uintmax_t threshold, uintmax_t actual, int op, const char *msg, int line)
{
    char buf[128];
    int ok = (op == UNITY_CMP_GT && actual > threshold) || (op == UNITY_CMP_LT && actual < threshold) ||
             (op == UNITY_CMP_GE && actual >= threshold) || (op == UNITY_CMP_LE && actual <= threshold);
    if (ok) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %s %" PRIuMAX " Was %" PRIuMAX, unity_cmp_names[op], threshold, actual);
    unity_report_failure(line, buf, msg);
}

void UnityAssertEqualPtr(const void *expected, const void *actual, const char *msg, int line)
{
    char buf[128];
    if (expected == actual) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %p Was %p", expected, actual);
    unity_report_failure(line, buf, msg);
}

void UnityAssertEqualString(const char *expected, const char *actual, const char *msg, int line)
{
    char buf[512];
    if (expected == actual) {
        return;
    }
    if (expected != NULL && actual != NULL && strcmp(expected, actual) == 0) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected '%s' Was '%s'", expected ? expected : "NULL", actual ? actual : "NULL");
    unity_report_failure(line, buf, msg);
}

void UnityAssertEqualStringLen(const char *expected, const char *actual, size_t len, const char *msg, int line)
{
    if (expected != NULL && actual != NULL && strncmp(expected, actual, len) == 0) {
        return;
    }
    unity_report_failure(line, "Strings differ", msg);
}

void UnityAssertEqualMemory(const void *expected, const void *actual, size_t len, const char *msg, int line)
{
    if (expected != NULL && actual != NULL && memcmp(expected, actual, len) == 0) {
        return;
    }
    unity_report_failure(line, "Memory mismatch", msg);
}

void UnityAssertIntArray(const void *expected, const void *actual, size_t elem_size, size_t count,
                         int is_unsigned, const char *msg, int line)
{
    char buf[160];
    const unsigned char *e = expected;
    const unsigned char *a = actual;
    size_t i;
    if (expected == NULL || actual == NULL) {
        unity_report_failure(line, "Array pointer was NULL", msg);
    }
    for (i = 0; i < count; i++) {
        intmax_t ev = 0, av = 0;
        if (elem_size == sizeof(int)) {
            int x, y;
            memcpy(&x, e + i * elem_size, sizeof(int));
            memcpy(&y, a + i * elem_size, sizeof(int));
            ev = is_unsigned ? (intmax_t)(unsigned)x : x;
            av = is_unsigned ? (intmax_t)(unsigned)y : y;
        } else {
            ev = is_unsigned ? e[i] : (signed char)e[i];
            av = is_unsigned ? a[i] : (signed char)a[i];
        }
        if (ev != av) {
            snprintf(buf, sizeof(buf), "Element %zu Expected %" PRIdMAX " Was %" PRIdMAX, i, ev, av);
            unity_report_failure(line, buf, msg);
        }
    }
}

void UnityAssertDoubleWithin(double delta, double expected, double actual, const char *msg, int line)
{
    char buf[160];
    double diff = actual - expected;
    if (diff < 0) {
        diff = -diff;
    }
    if (!isnan(diff) && diff <= delta) {
        return;
    }
    snprintf(buf, sizeof(buf), "Expected %.10g Was %.10g", expected, actual);
    unity_report_failure(line, buf, msg);
}
